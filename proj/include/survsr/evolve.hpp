#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "survsr/exprtree.hpp"
#include "survsr/metrics.hpp"
#include "survsr/multimodel.hpp"

namespace survsr {

/// Structural variation operators, in the order their probabilities are listed.
enum class VariationOp : std::uint8_t {
    add_expr,
    del_expr,
    expr_xover,
    subtree_xover,
    node_xover,
    subtree_mut,
    node_mut,
    none,
};

inline constexpr std::size_t kVariationOpCount = 7;

std::string_view to_string(VariationOp op) noexcept;

struct EvolutionConfig {
    int pop_size = 1000;
    int generations = 100;
    int tournament_size = 4;
    int max_nodes = 7;
    int init_trees_min = 1;
    int init_trees_max = 4;
    /// Indexed by VariationOp.
    std::array<double, kVariationOpCount> op_probs{0.05, 0.05, 0.10, 0.10, 0.25, 0.25, 0.25};
    double const_mut_offspring_frac = 0.90;
    double const_mut_node_prob = 0.5;
    double temperature = 0.1;
    double theta_lambda = 1e-6;
    double theta_l1_ratio = 0.5;
    std::uint64_t seed = 0;
    /// Threads for fitting and scoring offspring; results do not depend on it.
    int threads = 1;

    /// Throws ConfigError on out-of-range values.
    void validate() const;
};

struct Individual {
    MultiExprModel model;
    ObjectiveVector objectives;
    std::string signature;
    int front_rank = 0;
    double crowding = 0.0;
    bool duplicate = false;
};

/// Pareto fronts (minimize neg_ci, minimize dims), best first.
std::vector<std::vector<std::size_t>> nondominated_sort(std::span<const ObjectiveVector> objectives);

/// NSGA-2 crowding distance of the members of one front (aligned with `front`).
/// Boundary points get +infinity.
std::vector<double> crowding_distance(std::span<const ObjectiveVector> objectives, std::span<const std::size_t> front);

/// Lower rank wins, then larger crowding.
bool crowded_better(const Individual& a, const Individual& b) noexcept;

/// Sample `size` individuals with replacement; return the index of the
/// crowded-comparison winner (exact ties broken uniformly).
std::size_t tournament_select(std::span<const Individual> population, Rng& rng, int size = 4);

struct VariationOutcome {
    MultiExprModel model;
    VariationOp op = VariationOp::none;
    bool constants_mutated = false;
};

/// Visit the seven operators in random order; the first whose coin fires is
/// applied. Then mutate constants with probability const_mut_offspring_frac.
/// An offspring that changed is unfitted.
VariationOutcome vary(const MultiExprModel& parent, const MultiExprModel& donor, Rng& rng,
                      const EvolutionConfig& config, const TreeSpace& space);

/// Demote every individual whose signature repeats a better one to
/// rank (worst rank + 1).
void penalize_duplicates(std::vector<Individual>& population);

/// NSGA-2 ranking, duplicate penalization and crowding; returns the `keep`
/// best by (rank, crowding), ranks and crowding filled in.
std::vector<Individual> survivor_select(std::vector<Individual> pool, std::size_t keep);

/// Nondominated individuals of `archive` + `candidates` by objectives, one per
/// distinct objective vector (earliest kept).
std::vector<Individual> update_archive(std::vector<Individual> archive, std::span<const Individual> candidates);

ParetoFront front_of(std::span<const Individual> individuals);

struct GenerationReport {
    int generation = 0;
    double archive_hv = 0.0;
    /// (dims, best training CI) for each dims value in the population.
    std::vector<std::pair<int, double>> best_ci_by_dims;
};

struct EvolutionHooks {
    /// Called for every individual created (initial population and offspring), in creation order.
    std::function<void(const Individual&)> on_created;
    std::function<void(const GenerationReport&, std::span<const Individual> population,
                       std::span<const Individual> archive)>
        on_generation;
};

struct EvolutionResult {
    std::vector<Individual> population;
    std::vector<Individual> archive;
    /// Archive hypervolume (training objectives) after initialization and after each generation.
    std::vector<double> archive_hv;
};

/// mu + lambda NSGA-2 over multi-expression Cox models. Objectives are
/// measured on `train` only. Deterministic for a given seed.
EvolutionResult evolve(const SurvivalDataset& train, const EvolutionConfig& config, const EvolutionHooks& hooks = {});

/// Checkpoint document: generation, population signatures and objectives, archive models.
nlohmann::json checkpoint_json(const GenerationReport& report, std::span<const Individual> population,
                               std::span<const Individual> archive);

}  // namespace survsr
