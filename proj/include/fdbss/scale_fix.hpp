#pragma once

#include <Eigen/Dense>

#include <vector>

#include "fdbss/errors.hpp"
#include "fdbss/ica.hpp"
#include "fdbss/signal.hpp"

namespace fdbss {

// Per-source microphone images: images[j] holds source j as observed at every
// microphone. Summing the images over j recovers the input spectrogram.
struct SourceImageSet {
  std::vector<Spectrogram> images;

  int sources() const { return static_cast<int>(images.size()); }
  int microphones() const { return images.empty() ? 0 : images[0].channels(); }

  // Single-channel view of every source at one microphone, stacked as a
  // spectrogram with one row per source.
  Spectrogram at_microphone(int mic) const {
    if (images.empty()) throw DataError("SourceImageSet: empty");
    if (mic < 0 || mic >= microphones())
      throw ConfigError("SourceImageSet: reference microphone out of range");
    Spectrogram out = images[0].shape_like(sources());
    for (int j = 0; j < sources(); ++j)
      for (int f = 0; f < out.bins(); ++f)
        out.data[f].row(j) = images[j].data[f].row(mic);
    return out;
  }
};

struct ScaleFixStats {
  int singular_bins = 0;
};

// Resolve the per-bin scale ambiguity: image_j(f,.) = W_f^-1 E_j W_f X(f,.)
// with E_j selecting the j-th separated component. Bins with a singular
// unmixing keep the identity projector (source j = microphone channel j).
inline SourceImageSet map_to_microphone_domain(const Spectrogram& X,
                                               const UnmixingSet& set,
                                               ScaleFixStats* stats = nullptr) {
  if (static_cast<int>(set.bins.size()) != X.bins())
    throw ConfigError("map_to_microphone_domain: bin count mismatch");
  const int m = X.channels();
  const int n = m;  // determined case

  SourceImageSet out;
  out.images.assign(n, X.shape_like(m));
  if (stats) *stats = ScaleFixStats{};

  for (int f = 0; f < X.bins(); ++f) {
    const Eigen::MatrixXcd total = set.bins[f].total();
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(total);
    if (!lu.isInvertible()) {
      if (stats) stats->singular_bins += 1;
      for (int j = 0; j < n; ++j) out.images[j].data[f].row(j) = X.data[f].row(j);
      continue;
    }
    const Eigen::MatrixXcd inv = lu.inverse();
    const Eigen::MatrixXcd u = total * X.data[f];  // separated components
    for (int j = 0; j < n; ++j) out.images[j].data[f] = inv.col(j) * u.row(j);
  }
  return out;
}

}  // namespace fdbss
