#pragma once

#include <filesystem>
#include <string>

#include "optstop/engine/value_stack.hpp"

namespace optstop::engine {

/// Directory layout: manifest.txt plus payoff_<t>.osnn, continuation_<t>.osnn, value_<t>.osnn.
/// Reals in the manifest are written as hexadecimal floats so a reload is bit-exact.
void save_stack(const ValueStack& stack, const std::filesystem::path& dir);
ValueStack load_stack(const std::filesystem::path& dir);

std::string stack_manifest(const ValueStack& stack);

/// Same parameters, diagnostics, draws and bit-identical networks.
bool stacks_bitwise_equal(const ValueStack& a, const ValueStack& b);

}  // namespace optstop::engine
