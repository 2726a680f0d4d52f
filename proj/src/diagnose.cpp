#include "tqa/diagnose.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "tqa/table.hpp"

namespace tqa {

std::vector<ScoreDumpEntry> parse_score_dump(const std::string& jsonl) {
    std::vector<ScoreDumpEntry> out;
    std::istringstream in(jsonl);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        ScoreDumpEntry e;
        e.example_id = j.at("example_id").get<std::string>();
        e.eta_uns = j.at("eta_uns").get<std::vector<double>>();
        e.eta_cell = j.at("eta_cell").get<std::vector<double>>();
        e.eta = j.at("eta").get<std::vector<double>>();
        e.cells = j.at("cells").get<std::vector<std::string>>();
        if (j.contains("latent")) {
            const auto rows = j.at("latent").get<std::vector<std::vector<double>>>();
            if (!rows.empty()) {
                e.latent.resize(static_cast<long>(rows.size()),
                                static_cast<long>(rows[0].size()));
                for (std::size_t r = 0; r < rows.size(); ++r) {
                    for (std::size_t c = 0; c < rows[r].size(); ++c) {
                        e.latent(static_cast<long>(r), static_cast<long>(c)) = rows[r][c];
                    }
                }
            }
        }
        out.push_back(std::move(e));
    }
    return out;
}

DumpDiagnostics diagnose_dump(const std::string& label,
                              const std::vector<ScoreDumpEntry>& dump) {
    if (dump.empty()) throw StructureError("empty score dump");
    DumpDiagnostics d;
    d.label = label;

    long mid = 0;
    long latent_rows = 0;
    long latent_dim = 0;
    for (const auto& e : dump) {
        for (double s : e.eta_uns) {
            const int bucket = std::min(19, std::max(0, static_cast<int>(s * 20.0)));
            d.histogram[static_cast<std::size_t>(bucket)] += 1;
            if (s >= 0.4 && s <= 0.6) ++mid;
            ++d.token_count;
        }
        if (e.latent.size() > 0) {
            latent_rows += e.latent.rows();
            latent_dim = e.latent.cols();
        }
    }
    d.fraction_mid =
        d.token_count ? static_cast<double>(mid) / static_cast<double>(d.token_count) : 0.0;

    if (latent_rows >= 2 && latent_dim >= 2) {
        nn::Mat x(latent_rows, latent_dim);
        long at = 0;
        for (const auto& e : dump) {
            if (e.latent.size() == 0) continue;
            x.middleRows(at, e.latent.rows()) = e.latent;
            // Token relevant iff its fused score exceeds the example mean.
            double mean = 0;
            for (double s : e.eta) mean += s;
            mean /= static_cast<double>(e.eta.size());
            for (double s : e.eta) d.relevant_label.push_back(s > mean);
            at += e.latent.rows();
        }
        // Deterministic PCA: top-2 eigenvectors of the covariance, sign fixed
        // so each component's largest-magnitude coordinate is positive.
        const Eigen::RowVectorXd mean = x.colwise().mean();
        nn::Mat centered = x.rowwise() - mean;
        nn::Mat cov = centered.transpose() * centered / static_cast<double>(x.rows());
        Eigen::SelfAdjointEigenSolver<nn::Mat> eig(cov);
        nn::Mat basis(latent_dim, 2);
        basis.col(0) = eig.eigenvectors().col(latent_dim - 1);
        basis.col(1) = eig.eigenvectors().col(latent_dim - 2);
        for (int c = 0; c < 2; ++c) {
            long argmax = 0;
            basis.col(c).cwiseAbs().maxCoeff(&argmax);
            if (basis(argmax, c) < 0) basis.col(c) = -basis.col(c);
        }
        nn::Mat proj = centered * basis;
        for (long r = 0; r < proj.rows(); ++r) {
            d.projection.push_back({proj(r, 0), proj(r, 1)});
        }
    }
    return d;
}

std::string diagnostics_to_json(const std::vector<DumpDiagnostics>& all) {
    nlohmann::json j;
    j["schema"] = "tqa.diagnostics";
    j["version"] = 1;
    nlohmann::json variants = nlohmann::json::array();
    for (const auto& d : all) {
        nlohmann::json v;
        v["label"] = d.label;
        v["histogram"] = d.histogram;
        v["token_count"] = d.token_count;
        v["fraction_mid"] = d.fraction_mid;
        nlohmann::json proj = nlohmann::json::array();
        for (std::size_t i = 0; i < d.projection.size(); ++i) {
            proj.push_back({{"x", d.projection[i][0]},
                            {"y", d.projection[i][1]},
                            {"relevant", static_cast<bool>(d.relevant_label[i])}});
        }
        v["projection"] = proj;
        variants.push_back(std::move(v));
    }
    j["variants"] = std::move(variants);
    return j.dump();
}

}  // namespace tqa
