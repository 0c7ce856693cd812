#include "genprobe/policy.hpp"

#include <cmath>
#include <stdexcept>

#include "genprobe/gp_env.hpp"
#include "genprobe/nav_env.hpp"

namespace genprobe {

PolicyOutput ExpertPolicy::act(const std::string&, const Environment& env) { return {env.expert_output(), 0.0, 0.0}; }

PolicyOutput UniformRandomPolicy::act(const std::string&, const Environment& env) {
  if (const auto* gp_env = dynamic_cast<const gp::GpEnv*>(&env)) {
    std::array<std::int64_t, 4> numbers{};
    for (auto& n : numbers) n = rng_.between(1, 13);
    const auto& templates = gp::formula_templates();
    const auto& tmpl = templates[rng_.below(templates.size())];
    const auto symbols = gp_env->card_symbols();
    const std::string formula = tmpl.render(numbers) + "=" + std::to_string(gp_env->rule().target);
    const double logp = -4.0 * std::log(13.0) - std::log(static_cast<double>(templates.size()));
    return {gp::render_answer(symbols, numbers, formula), logp, 0.0};
  }
  if (const auto* nav_env = dynamic_cast<const nav::NavEnv*>(&env)) {
    const auto view = nav_env->view();
    const auto actions = nav::action_set(view.space);
    const auto& action = actions[rng_.below(actions.size())];
    return {nav::render_answer(view.observations.back(), "", action.str()),
            -std::log(static_cast<double>(actions.size())), 0.0};
  }
  throw std::invalid_argument("random policy: unsupported environment");
}

}  // namespace genprobe
