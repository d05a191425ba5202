#include "survsr/evolve.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "survsr/error.hpp"
#include "survsr/parallel.hpp"

namespace survsr {

std::string_view to_string(VariationOp op) noexcept {
    switch (op) {
    case VariationOp::add_expr: return "add_expr";
    case VariationOp::del_expr: return "del_expr";
    case VariationOp::expr_xover: return "expr_xover";
    case VariationOp::subtree_xover: return "subtree_xover";
    case VariationOp::node_xover: return "node_xover";
    case VariationOp::subtree_mut: return "subtree_mut";
    case VariationOp::node_mut: return "node_mut";
    case VariationOp::none: return "none";
    }
    return "none";
}

void EvolutionConfig::validate() const {
    if (pop_size < 2 || pop_size % 2 != 0) {
        throw ConfigError("pop_size must be even and at least 2");
    }
    if (generations < 0) {
        throw ConfigError("generations must be nonnegative");
    }
    if (tournament_size < 1) {
        throw ConfigError("tournament_size must be at least 1");
    }
    if (max_nodes < 1) {
        throw ConfigError("max_nodes must be at least 1");
    }
    if (init_trees_min < 1 || init_trees_max < init_trees_min) {
        throw ConfigError("need 1 <= init_trees_min <= init_trees_max");
    }
    const auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
    for (double p : op_probs) {
        if (!in_unit(p)) {
            throw ConfigError("operator probabilities must lie in [0, 1]");
        }
    }
    if (!in_unit(const_mut_offspring_frac) || !in_unit(const_mut_node_prob)) {
        throw ConfigError("constant-mutation probabilities must lie in [0, 1]");
    }
    if (temperature < 0.0 || theta_lambda < 0.0 || !in_unit(theta_l1_ratio)) {
        throw ConfigError("temperature and theta_lambda must be nonnegative, theta_l1_ratio in [0, 1]");
    }
}

// ---------------------------------------------------------------------------
// Sorting

namespace {

bool dominates(const ObjectiveVector& a, const ObjectiveVector& b) noexcept {
    return a.neg_ci <= b.neg_ci && a.dims <= b.dims && (a.neg_ci < b.neg_ci || a.dims < b.dims);
}

}  // namespace

std::vector<std::vector<std::size_t>> nondominated_sort(std::span<const ObjectiveVector> objectives) {
    const std::size_t n = objectives.size();
    std::vector<std::vector<std::size_t>> dominated(n);
    std::vector<int> count(n, 0);
    std::vector<std::vector<std::size_t>> fronts;
    std::vector<std::size_t> current;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (dominates(objectives[i], objectives[j])) {
                dominated[i].push_back(j);
                ++count[j];
            } else if (dominates(objectives[j], objectives[i])) {
                dominated[j].push_back(i);
                ++count[i];
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (count[i] == 0) {
            current.push_back(i);
        }
    }
    while (!current.empty()) {
        std::vector<std::size_t> next;
        for (std::size_t i : current) {
            for (std::size_t j : dominated[i]) {
                if (--count[j] == 0) {
                    next.push_back(j);
                }
            }
        }
        std::sort(next.begin(), next.end());
        fronts.push_back(std::move(current));
        current = std::move(next);
    }
    return fronts;
}

std::vector<double> crowding_distance(std::span<const ObjectiveVector> objectives, std::span<const std::size_t> front) {
    const std::size_t m = front.size();
    std::vector<double> dist(m, 0.0);
    if (m <= 2) {
        std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
        return dist;
    }
    std::vector<std::size_t> pos(m);
    const auto accumulate_axis = [&](auto key) {
        std::iota(pos.begin(), pos.end(), std::size_t{0});
        std::stable_sort(pos.begin(), pos.end(),
                         [&](std::size_t a, std::size_t b) { return key(front[a]) < key(front[b]); });
        const double lo = key(front[pos.front()]);
        const double hi = key(front[pos.back()]);
        dist[pos.front()] = std::numeric_limits<double>::infinity();
        dist[pos.back()] = std::numeric_limits<double>::infinity();
        if (hi <= lo) {
            return;
        }
        for (std::size_t k = 1; k + 1 < m; ++k) {
            dist[pos[k]] += (key(front[pos[k + 1]]) - key(front[pos[k - 1]])) / (hi - lo);
        }
    };
    accumulate_axis([&](std::size_t i) { return objectives[i].neg_ci; });
    accumulate_axis([&](std::size_t i) { return static_cast<double>(objectives[i].dims); });
    return dist;
}

bool crowded_better(const Individual& a, const Individual& b) noexcept {
    if (a.front_rank != b.front_rank) {
        return a.front_rank < b.front_rank;
    }
    return a.crowding > b.crowding;
}

std::size_t tournament_select(std::span<const Individual> population, Rng& rng, int size) {
    if (population.empty()) {
        throw Error("tournament on an empty population");
    }
    std::uniform_int_distribution<std::size_t> pick(0, population.size() - 1);
    std::size_t best = pick(rng);
    int ties = 1;
    for (int k = 1; k < size; ++k) {
        const std::size_t c = pick(rng);
        if (crowded_better(population[c], population[best])) {
            best = c;
            ties = 1;
        } else if (!crowded_better(population[best], population[c])) {
            ++ties;
            if (std::uniform_int_distribution<int>(1, ties)(rng) == 1) {
                best = c;
            }
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Variation

VariationOutcome vary(const MultiExprModel& parent, const MultiExprModel& donor, Rng& rng,
                      const EvolutionConfig& config, const TreeSpace& space) {
    std::array<std::size_t, kVariationOpCount> order{};
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    VariationOutcome out{parent, VariationOp::none, false};
    std::vector<ExprTree> trees = parent.trees();
    bool changed = false;
    const auto pick_tree = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };

    for (std::size_t k : order) {
        if (!std::bernoulli_distribution(config.op_probs[k])(rng)) {
            continue;
        }
        const auto op = static_cast<VariationOp>(k);
        out.op = op;
        switch (op) {
        case VariationOp::add_expr:
            trees.push_back(ramped_half_and_half(rng, space));
            changed = true;
            break;
        case VariationOp::del_expr:
            if (trees.size() > 1) {
                trees.erase(trees.begin() + static_cast<std::ptrdiff_t>(pick_tree(trees.size())));
                changed = true;
            }
            break;
        case VariationOp::expr_xover: {
            const auto i = pick_tree(trees.size());
            trees[i] = donor.trees()[pick_tree(donor.n_trees())];
            changed = true;
            break;
        }
        case VariationOp::subtree_xover: {
            const auto i = pick_tree(trees.size());
            const auto& d = donor.trees()[pick_tree(donor.n_trees())];
            trees[i] = subtree_crossover(trees[i], d, rng, config.max_nodes);
            changed = true;
            break;
        }
        case VariationOp::node_xover: {
            const auto i = pick_tree(trees.size());
            const auto& d = donor.trees()[pick_tree(donor.n_trees())];
            trees[i] = node_level_crossover(trees[i], d, rng);
            changed = true;
            break;
        }
        case VariationOp::subtree_mut: {
            const auto i = pick_tree(trees.size());
            trees[i] = subtree_mutation(trees[i], rng, space);
            changed = true;
            break;
        }
        case VariationOp::node_mut: {
            const auto i = pick_tree(trees.size());
            trees[i] = node_level_mutation(trees[i], rng, space);
            changed = true;
            break;
        }
        case VariationOp::none: break;
        }
        break;
    }

    if (std::bernoulli_distribution(config.const_mut_offspring_frac)(rng)) {
        for (auto& t : trees) {
            t = mutate_constants(t, rng, config.temperature, config.const_mut_node_prob);
        }
        out.constants_mutated = true;
        changed = true;
    }
    if (changed) {
        out.model = MultiExprModel(std::move(trees));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Selection

namespace {

std::vector<ObjectiveVector> objectives_of(std::span<const Individual> pop) {
    std::vector<ObjectiveVector> out;
    out.reserve(pop.size());
    for (const auto& ind : pop) {
        out.push_back(ind.objectives);
    }
    return out;
}

void assign_crowding_by_rank(std::vector<Individual>& pop) {
    std::map<int, std::vector<std::size_t>> by_rank;
    for (std::size_t i = 0; i < pop.size(); ++i) {
        by_rank[pop[i].front_rank].push_back(i);
    }
    const auto objs = objectives_of(pop);
    for (const auto& [rank, members] : by_rank) {
        const auto dist = crowding_distance(objs, members);
        for (std::size_t k = 0; k < members.size(); ++k) {
            pop[members[k]].crowding = dist[k];
        }
    }
}

void assign_ranks(std::vector<Individual>& pop) {
    const auto objs = objectives_of(pop);
    const auto fronts = nondominated_sort(objs);
    for (std::size_t f = 0; f < fronts.size(); ++f) {
        for (std::size_t i : fronts[f]) {
            pop[i].front_rank = static_cast<int>(f);
            pop[i].duplicate = false;
        }
    }
    assign_crowding_by_rank(pop);
}

}  // namespace

void penalize_duplicates(std::vector<Individual>& population) {
    if (population.empty()) {
        return;
    }
    int worst = 0;
    for (const auto& ind : population) {
        worst = std::max(worst, ind.front_rank);
    }
    std::unordered_map<std::string, std::size_t> representative;
    for (std::size_t i = 0; i < population.size(); ++i) {
        auto [it, inserted] = representative.emplace(population[i].signature, i);
        if (!inserted && crowded_better(population[i], population[it->second])) {
            it->second = i;
        }
    }
    for (std::size_t i = 0; i < population.size(); ++i) {
        if (representative.at(population[i].signature) != i) {
            population[i].duplicate = true;
            population[i].front_rank = worst + 1;
        }
    }
}

std::vector<Individual> survivor_select(std::vector<Individual> pool, std::size_t keep) {
    assign_ranks(pool);
    penalize_duplicates(pool);
    assign_crowding_by_rank(pool);
    std::vector<std::size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return crowded_better(pool[a], pool[b]); });
    std::vector<Individual> out;
    out.reserve(std::min(keep, pool.size()));
    for (std::size_t k = 0; k < idx.size() && k < keep; ++k) {
        out.push_back(std::move(pool[idx[k]]));
    }
    return out;
}

std::vector<Individual> update_archive(std::vector<Individual> archive, std::span<const Individual> candidates) {
    archive.insert(archive.end(), candidates.begin(), candidates.end());
    std::vector<Individual> out;
    for (std::size_t i = 0; i < archive.size(); ++i) {
        bool keep = true;
        for (std::size_t j = 0; j < archive.size() && keep; ++j) {
            if (j == i) {
                continue;
            }
            if (dominates(archive[j].objectives, archive[i].objectives) ||
                (j < i && archive[j].objectives == archive[i].objectives)) {
                keep = false;
            }
        }
        if (keep) {
            out.push_back(archive[i]);
        }
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const Individual& a, const Individual& b) { return a.objectives.dims < b.objectives.dims; });
    return out;
}

ParetoFront front_of(std::span<const Individual> individuals) {
    ParetoFront front;
    for (std::size_t i = 0; i < individuals.size(); ++i) {
        const auto& ind = individuals[i];
        front.points.push_back(FrontPoint{ind.objectives.dims, 1.0 - ind.objectives.neg_ci, i,
                                          static_cast<int>(ind.model.n_trees())});
    }
    return front;
}

// ---------------------------------------------------------------------------
// Main loop

namespace {

struct Evaluator {
    const SurvivalDataset& train;
    RiskSets risk_sets;
    IpcwConcordance concordance;
    std::string train_hash;
    FitOptions fit;

    Evaluator(const SurvivalDataset& ds, const EvolutionConfig& config)
        : train(ds),
          risk_sets(ds.times, ds.events),
          concordance(ds.times, ds.events),
          train_hash(ds.content_hash()) {
        fit.lambda = config.theta_lambda;
        fit.l1_ratio = config.theta_l1_ratio;
    }

    Individual operator()(MultiExprModel model) const {
        if (!model.fitted()) {
            model = fit_theta(std::move(model), train, risk_sets, fit, train_hash);
        }
        const Vector scores = risk_score(model, train.features);
        Individual ind{std::move(model), {}, prediction_signature(scores)};
        const auto ci = concordance(train.times, train.events, scores);
        ind.objectives.neg_ci = std::clamp(1.0 - ci.ci, 0.0, 1.0);
        ind.objectives.dims = ind.model.dims();
        return ind;
    }
};

std::vector<Individual> evaluate_all(std::vector<MultiExprModel> models, const Evaluator& eval, int threads) {
    std::vector<std::optional<Individual>> slots(models.size());
    parallel_for(models.size(), threads, [&](std::size_t i) { slots[i].emplace(eval(std::move(models[i]))); });
    std::vector<Individual> out;
    out.reserve(slots.size());
    for (auto& s : slots) {
        out.push_back(std::move(*s));
    }
    return out;
}

GenerationReport report_for(int generation, std::span<const Individual> population, std::span<const Individual> archive,
                            const HVConfig& hv) {
    GenerationReport r;
    r.generation = generation;
    r.archive_hv = hypervolume2d(front_of(archive), hv);
    std::map<int, double> best;
    for (const auto& ind : population) {
        const double ci = 1.0 - ind.objectives.neg_ci;
        auto [it, inserted] = best.emplace(ind.objectives.dims, ci);
        if (!inserted) {
            it->second = std::max(it->second, ci);
        }
    }
    r.best_ci_by_dims.assign(best.begin(), best.end());
    return r;
}

}  // namespace

EvolutionResult evolve(const SurvivalDataset& train, const EvolutionConfig& config, const EvolutionHooks& hooks) {
    config.validate();
    train.validate();
    Rng rng = make_rng(config.seed);
    const TreeSpace space = TreeSpace::for_dataset(train, config.max_nodes);
    const Evaluator evaluator(train, config);
    const HVConfig hv{static_cast<double>(std::max<Eigen::Index>(1, train.cols()))};
    const auto pop_size = static_cast<std::size_t>(config.pop_size);

    std::vector<MultiExprModel> initial;
    initial.reserve(pop_size);
    std::uniform_int_distribution<int> n_trees(config.init_trees_min, config.init_trees_max);
    for (std::size_t i = 0; i < pop_size; ++i) {
        std::vector<ExprTree> trees;
        const int m = n_trees(rng);
        for (int k = 0; k < m; ++k) {
            trees.push_back(ramped_half_and_half(rng, space));
        }
        initial.emplace_back(std::move(trees));
    }
    std::vector<Individual> population = evaluate_all(std::move(initial), evaluator, config.threads);
    if (hooks.on_created) {
        for (const auto& ind : population) {
            hooks.on_created(ind);
        }
    }
    std::vector<Individual> archive = update_archive({}, population);
    population = survivor_select(std::move(population), pop_size);

    EvolutionResult result;
    result.archive_hv.push_back(hypervolume2d(front_of(archive), hv));
    if (hooks.on_generation) {
        hooks.on_generation(report_for(0, population, archive, hv), population, archive);
    }

    for (int gen = 1; gen <= config.generations; ++gen) {
        std::vector<MultiExprModel> offspring;
        offspring.reserve(pop_size);
        std::uniform_int_distribution<std::size_t> any(0, population.size() - 1);
        for (std::size_t i = 0; i < pop_size; ++i) {
            const auto p = tournament_select(population, rng, config.tournament_size);
            const auto d = any(rng);
            offspring.push_back(vary(population[p].model, population[d].model, rng, config, space).model);
        }
        auto children = evaluate_all(std::move(offspring), evaluator, config.threads);
        if (hooks.on_created) {
            for (const auto& ind : children) {
                hooks.on_created(ind);
            }
        }
        archive = update_archive(std::move(archive), children);
        population.insert(population.end(), std::make_move_iterator(children.begin()),
                          std::make_move_iterator(children.end()));
        population = survivor_select(std::move(population), pop_size);
        result.archive_hv.push_back(hypervolume2d(front_of(archive), hv));
        if (hooks.on_generation) {
            hooks.on_generation(report_for(gen, population, archive, hv), population, archive);
        }
    }
    result.population = std::move(population);
    result.archive = std::move(archive);
    return result;
}

nlohmann::json checkpoint_json(const GenerationReport& report, std::span<const Individual> population,
                               std::span<const Individual> archive) {
    nlohmann::json pop = nlohmann::json::array();
    for (const auto& ind : population) {
        pop.push_back({{"signature", ind.signature},
                       {"neg_ci", ind.objectives.neg_ci},
                       {"dims", ind.objectives.dims},
                       {"rank", ind.front_rank}});
    }
    nlohmann::json arch = nlohmann::json::array();
    for (const auto& ind : archive) {
        arch.push_back({{"model", ind.model},
                        {"signature", ind.signature},
                        {"neg_ci", ind.objectives.neg_ci},
                        {"dims", ind.objectives.dims}});
    }
    return {{"generation", report.generation},
            {"archive_hv", report.archive_hv},
            {"population", std::move(pop)},
            {"archive", std::move(arch)}};
}

}  // namespace survsr
