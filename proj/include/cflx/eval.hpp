#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "cflx/image.hpp"

namespace cflx {

inline constexpr std::array<const char*, 6> kAspectNames = {
    "CRI", "CRA", "CCS", "SCS", "AES", "OA"};

struct AspectScores {
    enum class Source { Proxy, External };
    std::array<double, 6> scores{};  // CRI, CRA, CCS, SCS, AES, OA in [0,100]
    std::array<bool, 6> valid{};     // proxies only cover CRI and SCS
    Source source = Source::Proxy;

    double cri() const { return scores[0]; }
    double scs() const { return scores[3]; }
};

// Deterministic proxies: CRI = clamp(colorfulness, 0, 100) and
// SCS = 100 exp(-MAE(gray(out), condition) / 20) in 8-bit units. The four
// judgment aspects stay unscored.
AspectScores proxy_scores(const Image8& condition, const Image8& output);

// Mean absolute gray error in 8-bit units.
double mean_abs_gray_error(const Image8& output, const Image8& condition);

// 0 = warm (mean R-B >= 0), 1 = cool.
int dominant_hue_class(const Image8& img);

struct EndpointConfig {
    std::string base_url;  // e.g. http://127.0.0.1:8080
    std::string model = "qwen2.5-vl-72b-instruct";
    std::string path = "/v1/chat/completions";
    std::string auth_env = "CFLX_API_TOKEN";
    int max_retries = 2;
    int retry_backoff_ms = 100;
    int timeout_s = 30;
    bool send_condition = false;  // pair-image request
};

struct ExternalResult {
    AspectScores scores;
    int retries = 0;
    std::string raw_reply;  // persisted for audit even on parse failure
};

// Sends a chat-completions request with the template and PNG image(s);
// parses six named integer scores from the reply. Throws on transport
// failure after retries or on an unparseable reply (naming the aspect).
ExternalResult external_score(const Image8& image, const Image8* condition,
                              const EndpointConfig& cfg,
                              const std::string& prompt_template);

std::string default_score_template();

struct AggregateRow {
    double mean = 0.0;
    double stddev = 0.0;
    std::size_t count = 0;
};

// Per-aspect mean/stddev over records where the aspect is valid. Requires a
// nonempty, homogeneous-source list.
std::array<AggregateRow, 6> aggregate(const std::vector<AspectScores>& scores);

struct Ballot {
    std::string item;
    std::string method_a;
    std::string method_b;
    std::string winner;  // "a", "b", or an explicit method name
};

std::vector<Ballot> read_ballots(const std::string& path);
void write_ballots(const std::vector<Ballot>& ballots, const std::string& path);

// (# ballots method wins) / (# ballots involving method); zero involvement
// is an error.
double win_rate(const std::vector<Ballot>& ballots, const std::string& method);

}  // namespace cflx
