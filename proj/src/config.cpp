#include "mmvs/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace mmvs {

namespace {

double parse_number(const std::string& value, const std::string& origin, int line,
                    const std::string& key) {
    double v = 0.0;
    const char* begin = value.data();
    auto [ptr, ec] = std::from_chars(begin, begin + value.size(), v);
    if (ec != std::errc() || ptr != begin + value.size()) {
        std::ostringstream err;
        err << origin << ":" << line << ": cannot parse value '" << value << "' for key '"
            << key << "'";
        throw InvalidInput(err.str());
    }
    return v;
}

std::vector<double> parse_list(const std::string& value, const std::string& origin, int line,
                               const std::string& key) {
    std::vector<double> out;
    std::string token;
    std::istringstream ss(value);
    while (std::getline(ss, token, ','))
        out.push_back(parse_number(token, origin, line, key));
    if (out.empty()) throw InvalidInput(origin + ": empty list for key '" + key + "'");
    return out;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

}  // namespace

Config parse_config_text(const std::string& text, const std::string& origin) {
    Config cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw InvalidInput(origin + ":" + std::to_string(line_no) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        auto num = [&] { return parse_number(value, origin, line_no, key); };

        LossWeights& w = cfg.solver.weights;
        if (key == "gamma1") w.gamma1 = num();
        else if (key == "gamma2") w.gamma2 = num();
        else if (key == "alpha1") w.alpha1 = num();
        else if (key == "alpha2") w.alpha2 = num();
        else if (key == "alpha3") w.alpha3 = num();
        else if (key == "lambda1") w.lambda1 = num();
        else if (key == "lambda2") w.lambda2 = num();
        else if (key == "lambda3") w.lambda3 = num();
        else if (key == "beta1") w.beta1 = num();
        else if (key == "beta2") w.beta2 = num();
        else if (key == "beta3") w.beta3 = num();
        else if (key == "beta4") w.beta4 = num();
        else if (key == "max_iters") cfg.solver.max_iters = int(num());
        else if (key == "step_size") cfg.solver.step_size = num();
        else if (key == "step_decay") cfg.solver.step_decay = num();
        else if (key == "nd_passes") cfg.solver.nd_passes = int(num());
        else if (key == "nd_every") cfg.solver.nd_every = int(num());
        else if (key == "temperature") cfg.solver.temperature = num();
        else if (key == "feature_scales")
            cfg.solver.scales = parse_list(value, origin, line_no, key);
        else if (key == "seed") cfg.solver.seed = unsigned(num());
        else if (key == "photo_threshold") cfg.photo_threshold = num();
        else if (key == "geo_pixel_tol") cfg.geo_pixel_tol = num();
        else if (key == "geo_depth_tol") cfg.geo_depth_tol = num();
        else if (key == "min_views") cfg.min_views = int(num());
        else if (key == "max_dist") cfg.max_dist = num();
        else if (key == "thresholds") cfg.thresholds = parse_list(value, origin, line_no, key);
        else if (key == "gradcheck_samples") cfg.gradcheck_samples = int(num());
        else if (key == "threads") cfg.threads = int(num());
        else
            throw InvalidInput(origin + ":" + std::to_string(line_no) + ": unknown config key '" +
                               key + "'");
    }
    validate(cfg.solver.weights);
    return cfg;
}

Config load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str(), path.string());
}

std::string default_config_text() {
    const Config d;
    std::ostringstream out;
    out << "# loss weights\n";
    out << "gamma1=" << d.solver.weights.gamma1 << "\n";
    out << "gamma2=" << d.solver.weights.gamma2 << "\n";
    out << "alpha1=" << d.solver.weights.alpha1 << "\n";
    out << "alpha2=" << d.solver.weights.alpha2 << "\n";
    out << "alpha3=" << d.solver.weights.alpha3 << "\n";
    out << "lambda1=" << d.solver.weights.lambda1 << "\n";
    out << "lambda2=" << d.solver.weights.lambda2 << "\n";
    out << "lambda3=" << d.solver.weights.lambda3 << "\n";
    out << "beta1=" << d.solver.weights.beta1 << "\n";
    out << "beta2=" << d.solver.weights.beta2 << "\n";
    out << "beta3=" << d.solver.weights.beta3 << "\n";
    out << "beta4=" << d.solver.weights.beta4 << "\n";
    out << "# solver\n";
    out << "max_iters=" << d.solver.max_iters << "\n";
    out << "step_size=" << d.solver.step_size << "\n";
    out << "step_decay=" << d.solver.step_decay << "\n";
    out << "nd_passes=" << d.solver.nd_passes << "\n";
    out << "nd_every=" << d.solver.nd_every << "\n";
    out << "temperature=" << d.solver.temperature << "\n";
    out << "feature_scales=0.5,0.25,0.125\n";
    out << "seed=" << d.solver.seed << "\n";
    out << "# fusion\n";
    out << "photo_threshold=" << d.photo_threshold << "\n";
    out << "geo_pixel_tol=" << d.geo_pixel_tol << "\n";
    out << "geo_depth_tol=" << d.geo_depth_tol << "\n";
    out << "min_views=" << d.min_views << "\n";
    out << "# evaluation\n";
    out << "max_dist=" << d.max_dist << "\n";
    out << "thresholds=2,4,8\n";
    out << "# run\n";
    out << "gradcheck_samples=" << d.gradcheck_samples << "\n";
    out << "threads=" << d.threads << "\n";
    return out.str();
}

}  // namespace mmvs
