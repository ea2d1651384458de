#include "cflx/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <stdexcept>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "cflx/color.hpp"
#include "cflx/png_io.hpp"

namespace cflx {

double mean_abs_gray_error(const Image8& output, const Image8& condition) {
    if (output.width != condition.width || output.height != condition.height)
        throw std::invalid_argument("mean_abs_gray_error: size mismatch");
    const Image8 gray = rgb_to_gray(output);
    const Image8 cond = condition.channels == 1 ? condition : rgb_to_gray(condition);
    double acc = 0.0;
    for (std::size_t i = 0; i < gray.data.size(); ++i)
        acc += std::abs(static_cast<int>(gray.data[i]) - static_cast<int>(cond.data[i]));
    return acc / static_cast<double>(gray.data.size());
}

int dominant_hue_class(const Image8& img) {
    if (img.channels != 3)
        throw std::invalid_argument("dominant_hue_class: 3-channel image required");
    const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        acc += static_cast<double>(img.data[3 * i]) - img.data[3 * i + 2];
    return acc >= 0.0 ? 0 : 1;
}

AspectScores proxy_scores(const Image8& condition, const Image8& output) {
    if (condition.width != output.width || condition.height != output.height)
        throw std::invalid_argument("proxy_scores: size mismatch");
    AspectScores s;
    s.source = AspectScores::Source::Proxy;
    s.scores[0] = std::clamp(colorfulness(output), 0.0, 100.0);  // CRI
    s.valid[0] = true;
    s.scores[3] = 100.0 * std::exp(-mean_abs_gray_error(output, condition) / 20.0);  // SCS
    s.valid[3] = true;
    return s;
}

namespace {

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    static const char* tbl =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= bytes.size(); i += 3) {
        const unsigned v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out += tbl[(v >> 18) & 63];
        out += tbl[(v >> 12) & 63];
        out += tbl[(v >> 6) & 63];
        out += tbl[v & 63];
    }
    if (i + 1 == bytes.size()) {
        const unsigned v = bytes[i] << 16;
        out += tbl[(v >> 18) & 63];
        out += tbl[(v >> 12) & 63];
        out += "==";
    } else if (i + 2 == bytes.size()) {
        const unsigned v = (bytes[i] << 16) | (bytes[i + 1] << 8);
        out += tbl[(v >> 18) & 63];
        out += tbl[(v >> 12) & 63];
        out += tbl[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

nlohmann::json image_part(const Image8& img) {
    return {{"type", "image_url"},
            {"image_url",
             {{"url", "data:image/png;base64," + base64_encode(encode_png(img))}}}};
}

}  // namespace

std::string default_score_template() {
    return
        "You are evaluating an image colorization result. Rate the colorized "
        "image on six aspects, each as an integer 0-100:\n"
        "- CRI (Color Richness): diversity and vividness of colors.\n"
        "- CRA (Color Rationality): colors harmonious and consistent with "
        "real-world semantics.\n"
        "- CCS (Color Consistency): free of color bleeding across regions "
        "with similar semantics.\n"
        "- SCS (Structural Consistency): structural fidelity between the "
        "grayscale input and the colorized result.\n"
        "- AES (Aesthetics): overall visual appeal.\n"
        "- OA (Overall): holistic score considering all of the above.\n"
        "Reply with exactly six lines, one per aspect, formatted as "
        "'NAME: SCORE'.";
}

ExternalResult external_score(const Image8& image, const Image8* condition,
                              const EndpointConfig& cfg,
                              const std::string& prompt_template) {
    nlohmann::json content = nlohmann::json::array();
    content.push_back({{"type", "text"}, {"text", prompt_template}});
    if (cfg.send_condition && condition) content.push_back(image_part(*condition));
    content.push_back(image_part(image));
    const nlohmann::json body = {
        {"model", cfg.model},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})}};
    const std::string payload = body.dump();

    httplib::Client client(cfg.base_url);
    client.set_read_timeout(cfg.timeout_s, 0);
    httplib::Headers headers;
    if (const char* tok = std::getenv(cfg.auth_env.c_str()))
        headers.emplace("Authorization", std::string("Bearer ") + tok);

    ExternalResult res;
    std::string last_error;
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        if (attempt > 0) {
            res.retries = attempt;
            std::this_thread::sleep_for(
                std::chrono::milliseconds(cfg.retry_backoff_ms * attempt));
        }
        auto reply = client.Post(cfg.path, headers, payload, "application/json");
        if (!reply) {
            last_error = "transport error: " + httplib::to_string(reply.error());
            continue;
        }
        if (reply->status != 200) {
            last_error = "HTTP " + std::to_string(reply->status);
            continue;
        }
        res.raw_reply = reply->body;
        std::string text;
        try {
            const auto j = nlohmann::json::parse(reply->body);
            text = j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const std::exception& e) {
            throw std::runtime_error(std::string("external_score: malformed reply: ") +
                                     e.what());
        }
        res.scores.source = AspectScores::Source::External;
        for (std::size_t a = 0; a < kAspectNames.size(); ++a) {
            const std::regex re(std::string(kAspectNames[a]) +
                                    R"([^0-9\-]{0,40}?(\d{1,3}))",
                                std::regex::icase);
            std::smatch m;
            if (!std::regex_search(text, m, re))
                throw std::runtime_error(std::string("external_score: aspect ") +
                                         kAspectNames[a] + " missing from reply");
            const double v = std::stod(m[1]);
            if (v < 0.0 || v > 100.0)
                throw std::runtime_error(std::string("external_score: aspect ") +
                                         kAspectNames[a] + " out of range");
            res.scores.scores[a] = v;
            res.scores.valid[a] = true;
        }
        return res;
    }
    throw std::runtime_error("external_score: " + last_error + " after " +
                             std::to_string(cfg.max_retries) + " retries");
}

std::array<AggregateRow, 6> aggregate(const std::vector<AspectScores>& scores) {
    if (scores.empty()) throw std::invalid_argument("aggregate: empty score list");
    for (const AspectScores& s : scores)
        if (s.source != scores[0].source)
            throw std::invalid_argument("aggregate: mixed proxy/external sources");
    std::array<AggregateRow, 6> out{};
    for (std::size_t a = 0; a < 6; ++a) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const AspectScores& s : scores)
            if (s.valid[a]) {
                sum += s.scores[a];
                ++n;
            }
        out[a].count = n;
        if (n == 0) continue;
        out[a].mean = sum / static_cast<double>(n);
        double var = 0.0;
        for (const AspectScores& s : scores)
            if (s.valid[a]) {
                const double d = s.scores[a] - out[a].mean;
                var += d * d;
            }
        out[a].stddev = std::sqrt(var / static_cast<double>(n));
    }
    return out;
}

std::vector<Ballot> read_ballots(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("read_ballots: cannot open " + path);
    std::vector<Ballot> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t pos = 0;
        while (true) {
            const std::size_t tab = line.find('\t', pos);
            fields.push_back(line.substr(pos, tab == std::string::npos ? tab : tab - pos));
            if (tab == std::string::npos) break;
            pos = tab + 1;
        }
        if (fields.size() != 4)
            throw std::runtime_error("read_ballots: malformed line " +
                                     std::to_string(lineno) + " in " + path);
        out.push_back({fields[0], fields[1], fields[2], fields[3]});
    }
    return out;
}

void write_ballots(const std::vector<Ballot>& ballots, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_ballots: cannot open " + path);
    for (const Ballot& b : ballots)
        f << b.item << '\t' << b.method_a << '\t' << b.method_b << '\t' << b.winner << '\n';
}

double win_rate(const std::vector<Ballot>& ballots, const std::string& method) {
    std::size_t involved = 0, wins = 0;
    for (const Ballot& b : ballots) {
        if (b.method_a != method && b.method_b != method) continue;
        std::string winner = b.winner;
        if (winner == "a") winner = b.method_a;
        else if (winner == "b") winner = b.method_b;
        if (winner != b.method_a && winner != b.method_b)
            throw std::runtime_error("win_rate: ballot winner '" + b.winner +
                                     "' references no listed method");
        ++involved;
        if (winner == method) ++wins;
    }
    if (involved == 0)
        throw std::runtime_error("win_rate: no ballots involve method '" + method + "'");
    return static_cast<double>(wins) / static_cast<double>(involved);
}

}  // namespace cflx
