#pragma once

// Scripted grid-search scenarios with their exact expected traces.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ricc/protocols.hpp"

namespace ricc::testing {

struct GridScenario {
    std::string name;
    double baseline = 2.0;
    std::function<double(double)> ratio;  // restoration loss / baseline at lambda_inv
    std::function<bool(double)> invariant;
    std::function<bool(double)> diverges = [](double) { return false; };

    // Expected outcome; an empty action list with `error` set means the
    // search throws after `error_trace` trials.
    std::vector<double> lambdas;
    std::vector<std::string> actions;
    GridOutcome outcome = GridOutcome::invariant;
    double result = 0.0;
    std::size_t calls = 0;
    bool error = false;
    std::size_t error_trace = 0;
};

inline std::vector<double> doublings(double start, std::size_t n, double factor) {
    std::vector<double> out{start};
    while (out.size() < n) out.push_back(out.back() * factor);
    return out;
}

inline std::vector<GridScenario> grid_scenarios() {
    const auto one = [](double) { return 1.0; };
    const auto never = [](double) { return false; };
    std::vector<GridScenario> s;

    s.push_back({"invariant at the start", 2.0, one, [](double) { return true; }, never,
                 {0.1}, {"terminate"}, GridOutcome::invariant, 0.1, 2});
    s.push_back({"invariant after two doublings", 2.0, one, [](double l) { return l >= 0.4; }, never,
                 {0.1, 0.2, 0.4}, {"double", "double", "terminate"}, GridOutcome::invariant, 0.4, 4});
    s.push_back({"ratio exactly 1.2 is accepted", 5.0, [](double) { return 1.2; }, [](double l) { return l > 0.15; }, never,
                 {0.1, 0.2}, {"double", "terminate"}, GridOutcome::invariant, 0.2, 3});
    s.push_back({"ratio above 1.2 halves", 2.0, [](double l) { return l >= 0.1 ? 1.2000001 : 1.0; },
                 [](double l) { return l <= 0.05; }, never,
                 {0.1, 0.05}, {"halve", "terminate"}, GridOutcome::invariant, 0.05, 3});
    s.push_back({"ratio rejection outranks invariance", 2.0, [](double l) { return l >= 0.4 ? 1.25 : 1.0; },
                 [](double l) { return l >= 0.4; }, never,
                 {0.1, 0.2, 0.4, 0.2, 0.4}, {"double", "double", "halve", "double", "halve"},
                 GridOutcome::oscillation, 0.2, 4});
    s.push_back({"oscillation after a rejection", 2.0, [](double l) { return l > 0.3 ? 1.5 : 1.1; }, never, never,
                 {0.1, 0.2, 0.4, 0.2, 0.4}, {"double", "double", "halve", "double", "halve"},
                 GridOutcome::oscillation, 0.2, 4});
    s.push_back({"move limit while doubling", 2.0, one, never, never, doublings(0.1, 12, 2.0),
                 std::vector<std::string>(12, "double"), GridOutcome::move_limit, 0.1 * 2048, 13});
    s.push_back({"no acceptable ratio", 2.0, [](double) { return 3.0; }, [](double) { return true; }, never,
                 doublings(0.1, 12, 0.5), std::vector<std::string>(12, "halve"), GridOutcome::move_limit, 0.0, 13});

    GridScenario nan_case{"divergence carries the trace", 2.0, one, never, [](double l) { return l >= 0.4; }};
    nan_case.error = true;
    nan_case.error_trace = 2;
    s.push_back(nan_case);

    GridScenario base_case{"diverged baseline", 2.0, one, never, [](double l) { return l == 0.0; }};
    base_case.error = true;
    base_case.error_trace = 0;
    s.push_back(base_case);
    return s;
}

inline GridTrainFn scenario_train_fn(const GridScenario& s, std::size_t& calls) {
    return [&s, &calls](double li, double, double) {
        ++calls;
        if (s.diverges(li)) return GridEvaluation{std::nan(""), 0.1};
        if (li == 0.0) return GridEvaluation{s.baseline, 0.5};
        return GridEvaluation{s.baseline * s.ratio(li), s.invariant(li) ? 0.01 : 0.2};
    };
}

// Runs one scenario; returns an empty string on an exact match, otherwise a
// description of the first mismatch.
inline std::string run_grid_scenario(const GridScenario& s) {
    std::size_t calls = 0;
    try {
        const auto st = grid_search(scenario_train_fn(s, calls), 10.0, 0.01);
        if (s.error) return "expected an error";
        std::vector<double> lambdas;
        std::vector<std::string> actions;
        for (const auto& t : st.history) {
            lambdas.push_back(t.lambda_inv);
            actions.push_back(t.action);
            if (t.ratio_ok != (t.ratio <= 1.2)) return "ratio_ok flag disagrees with the ratio";
        }
        if (lambdas != s.lambdas) return "lambda sequence differs";
        if (actions != s.actions) return "action sequence differs";
        if (st.outcome != s.outcome) return "outcome differs";
        if (st.lambda_inv != s.result) return "returned lambda_inv differs";
        if (calls != s.calls) return "train_fn called " + std::to_string(calls) + " times";
        if (st.lambda_res != 10.0 || st.lr != 0.01 || st.baseline_res_loss != s.baseline) return "state fields differ";
        return "";
    } catch (const GridSearchError& e) {
        if (!s.error) return std::string("unexpected error: ") + e.what();
        if (e.trace.size() != s.error_trace) return "error trace has " + std::to_string(e.trace.size()) + " trials";
        return "";
    }
}

}  // namespace ricc::testing
