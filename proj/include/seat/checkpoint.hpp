#pragma once

#include <string>

#include "seat/model.hpp"
#include "seat/seat.hpp"

namespace seat {

inline constexpr int kCheckpointFormatVersion = 1;

// Self-describing JSON checkpoints. Doubles round-trip bit-exactly through
// the shortest-representation serializer.

void save_model(const std::string& path, const AttentionModel& model);
AttentionModel load_model(const std::string& path);

void save_seat_scorer(const std::string& path, const SeatScorer& scorer);
SeatScorer load_seat_scorer(const std::string& path);

// FNV-1a 64 over the file bytes, 16 hex digits.
std::string file_hash(const std::string& path);
std::string bytes_hash(std::string_view bytes);

// write-to-temp then rename, so readers never see partial files
void atomic_write(const std::string& path, const std::string& contents);

}  // namespace seat
