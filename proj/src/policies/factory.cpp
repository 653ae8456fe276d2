#include "offpolicy/policies/factory.hpp"

#include "offpolicy/errors.hpp"
#include "offpolicy/policies/behaviour_policy.hpp"
#include "offpolicy/policies/target_policy.hpp"

namespace offpolicy::policies {

std::unique_ptr<Policy> make_policy(const nlohmann::json& config) {
  const std::string kind = config.value("kind", "");
  if (kind == "behaviour") return BehaviourPolicy::from_config(config);
  if (kind == "target") return TargetPolicy::from_config(config);
  throw ValidationError("unknown policy kind '" + kind + "'");
}

}  // namespace offpolicy::policies
