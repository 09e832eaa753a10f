#include "istrain/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace istrain {

TrackingFit tracking_coefficients(std::span<const double> predicted,
                                  std::span<const double> actual) {
    if (predicted.size() != actual.size())
        throw ShapeError("tracking_coefficients: length mismatch");
    if (predicted.size() < 2) throw ShapeError("tracking_coefficients: need at least 2 pairs");

    double mp = mean(predicted);
    double ma = mean(actual);
    double var_p = 0.0;
    double cov = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        var_p += (predicted[i] - mp) * (predicted[i] - mp);
        cov += (predicted[i] - mp) * (actual[i] - ma);
    }
    var_p /= static_cast<double>(predicted.size());
    cov /= static_cast<double>(predicted.size());

    TrackingFit fit;
    fit.n = predicted.size();
    if (var_p < 1e-12) {
        fit.a = 0.0;
        fit.b = ma;
    } else {
        fit.a = cov / var_p;
        fit.b = ma - fit.a * mp;
    }
    return fit;
}

namespace {

// average ranks for ties
std::vector<double> ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&v](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
        i = j + 1;
    }
    return r;
}

double pearson(std::span<const double> a, std::span<const double> b) {
    double ma = mean(a);
    double mb = mean(b);
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    if (va == 0.0 || vb == 0.0) return 0.0;
    return cov / std::sqrt(va * vb);
}

void moving_stats(std::span<const double> v, std::size_t window, std::vector<double>& avg,
                  std::vector<double>& sd) {
    avg.clear();
    sd.clear();
    if (v.size() < window || window == 0) return;
    for (std::size_t i = 0; i + window <= v.size(); ++i) {
        double m = 0.0;
        for (std::size_t j = 0; j < window; ++j) m += v[i + j];
        m /= static_cast<double>(window);
        double s = 0.0;
        for (std::size_t j = 0; j < window; ++j) s += (v[i + j] - m) * (v[i + j] - m);
        avg.push_back(m);
        sd.push_back(std::sqrt(s / static_cast<double>(window)));
    }
}

}  // namespace

double spearman_correlation(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("spearman_correlation: length mismatch");
    if (a.size() < 2) throw ShapeError("spearman_correlation: need at least 2 pairs");
    std::vector<double> ra = ranks(a);
    std::vector<double> rb = ranks(b);
    return pearson(ra, rb);
}

OrderingDiagnostic loss_gnorm_ordering(std::span<const double> losses,
                                       std::span<const double> gnorms) {
    if (losses.size() != gnorms.size()) throw ShapeError("loss_gnorm_ordering: length mismatch");
    for (double g : gnorms) {
        if (g < 0.0) throw ShapeError("loss_gnorm_ordering: gnorms must be >= 0");
    }

    OrderingDiagnostic diag;
    diag.spearman = spearman_correlation(losses, gnorms);

    std::vector<std::size_t> order(losses.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&gnorms](std::size_t a, std::size_t b) { return gnorms[a] < gnorms[b]; });
    std::vector<double> sorted_losses(losses.size());
    for (std::size_t i = 0; i < order.size(); ++i) sorted_losses[i] = losses[order[i]];

    moving_stats(sorted_losses, diag.window, diag.moving_avg, diag.moving_std);
    return diag;
}

VarianceReport variance_report(std::span<const RunLog> logs, std::size_t window,
                               double loss_threshold) {
    if (logs.empty()) throw ShapeError("variance_report: no logs");
    std::size_t common = logs[0].metrics.size();
    for (const RunLog& log : logs) common = std::min(common, log.metrics.size());

    VarianceReport report;
    report.window = window;
    report.loss_threshold = loss_threshold;
    for (const RunLog& log : logs) {
        StrategySummary row;
        row.name = log.name;
        std::vector<double> losses, traces;
        losses.reserve(common);
        traces.reserve(common);
        for (std::size_t i = 0; i < common; ++i) {
            losses.push_back(log.metrics[i].batch_mean_loss);
            traces.push_back(log.metrics[i].grad_variance_trace);
        }
        moving_stats(losses, window, row.loss_moving_mean, row.loss_moving_std);
        moving_stats(traces, window, row.var_trace_moving_mean, row.var_trace_moving_std);
        if (common > 0) row.final_ema_loss = log.metrics[common - 1].ema_loss;
        for (std::size_t i = 0; i < common; ++i) {
            if (log.metrics[i].ema_loss <= loss_threshold) {
                row.iterations_to_threshold = log.metrics[i].iteration;
                break;
            }
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

}  // namespace istrain
