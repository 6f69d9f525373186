#pragma once

#include <string>

#include "clab/measures.hpp"

namespace clab::io {

// Measure from its JSON description. `base_dir` resolves relative data files
// (points_file, vertices_file). Throws kConfig on malformed input.
measures::MeasureSpec parse_measure(const std::string& json_text, const std::string& base_dir = ".");

// `arg` is either inline JSON (starting with '{') or a path to a JSON file.
measures::MeasureSpec load_measure(const std::string& arg);

// One point per line, comma or whitespace separated; '#' starts a comment.
// Returns dim x count.
Mat read_points_csv(const std::string& path);

// Comma separated floats, e.g. "1,0.5,-2".
Vec parse_vector(const std::string& text);

}  // namespace clab::io
