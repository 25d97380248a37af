// phmm/cli.hpp

// Copyright 2026  The phmm Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// The phmm command line: subcommands prepare, gen-toy, train, synth, sweep,
// stats and creak-eval.
//
// Settings come from an optional config file (--config) and from flags; a
// flag always wins. The file is TOML-style: one "[subcommand]" section per
// command holding "key = value" lines named like the long flags without the
// leading dashes, with "#" comments. Every run writes the fully resolved
// settings to <out-dir>/resolved.conf, which can be passed back through
// --config to repeat the run.

#ifndef PHMM_CLI_HPP_
#define PHMM_CLI_HPP_

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "phmm/dsp.hpp"

namespace phmm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;      // bad flags, config or input files
inline constexpr int kExitNumerical = 3;  // non-finite loss or output
inline constexpr int kExitInternal = 1;

/// Runs one command line; args[0] is the program name. Normal output goes
/// to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Mel file layout (little-endian):
//   8 bytes "PHMMMEL1", u32 frames, u32 n_mels, then frames x n_mels
//   float64 values, row-major.
void write_mel_binary(const MelSpectrogram& mel, const std::filesystem::path& path);
FrameMatrix read_mel_binary(const std::filesystem::path& path);

}  // namespace phmm::cli

#endif  // PHMM_CLI_HPP_
