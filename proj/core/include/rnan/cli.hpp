#pragma once

namespace rnan {

// Entry point behind the `rnan` binary; also callable in-process from tests.
// Subcommands: prepare, train, eval, upscale, gradcheck, params.
int cli_main(int argc, const char* const* argv);

}  // namespace rnan
