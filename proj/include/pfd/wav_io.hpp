#pragma once

#include "pfd/dsp.hpp"

#include <filesystem>

namespace pfd::dsp {

// 16-bit PCM mono RIFF/WAVE. Reading rejects anything else, and rejects
// sample rates other than expected_rate when it is nonzero.
Waveform read_wav(const std::filesystem::path& path, int expected_rate = kDefaultSampleRate);

// Samples are clipped to [-1, 1] and quantized to 16 bits.
void write_wav(const std::filesystem::path& path, const Waveform& w);

// The value a sample takes after a write/read round trip.
double quantize_pcm16(double sample);

}  // namespace pfd::dsp
