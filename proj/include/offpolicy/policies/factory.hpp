#ifndef OFFPOLICY_POLICIES_FACTORY_HPP_
#define OFFPOLICY_POLICIES_FACTORY_HPP_

#include <memory>

#include "offpolicy/policies/policy.hpp"

namespace offpolicy::policies {

// Rebuilds a policy from its config_json(). Dispatches on "kind".
std::unique_ptr<Policy> make_policy(const nlohmann::json& config);

}  // namespace offpolicy::policies

#endif  // OFFPOLICY_POLICIES_FACTORY_HPP_
