#pragma once

#include <ostream>
#include <string>

#include "mmfuse/config.hpp"

namespace mmfuse {

// Batch entry points behind the CLI verbs. Each validates its keys against
// the config (unknown keys are rejected), does the work, and streams a
// line-oriented report to `out`. Errors surface as the exception types in
// errors.hpp; exit-code mapping happens in the binary.

void cmd_gen_synthetic(const Config& config, std::ostream& out);
void cmd_train_adapter(const Config& config, std::ostream& out);
void cmd_train_classifier(const Config& config, std::ostream& out);
void cmd_infer(const Config& config, std::ostream& out);
void cmd_evaluate(const Config& config, std::ostream& out);

}  // namespace mmfuse
