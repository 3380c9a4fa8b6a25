#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "msnn/rng.hpp"

namespace msnn {

// Dense 3D scalar field. Voxels are stored x-fastest: index = x + X*(y + Y*z).
struct Volume {
    std::uint32_t dims[3] = {0, 0, 0};  // X, Y, Z
    std::vector<float> voxels;

    Volume() = default;
    Volume(std::uint32_t x, std::uint32_t y, std::uint32_t z);

    std::size_t numel() const { return voxels.size(); }
    float& at(std::uint32_t x, std::uint32_t y, std::uint32_t z) {
        return voxels[x + static_cast<std::size_t>(dims[0]) * (y + static_cast<std::size_t>(dims[1]) * z)];
    }
    float at(std::uint32_t x, std::uint32_t y, std::uint32_t z) const {
        return voxels[x + static_cast<std::size_t>(dims[0]) * (y + static_cast<std::size_t>(dims[1]) * z)];
    }
};

// Randomized training-time transform parameters. Rotation is about the
// inferior-superior (Z) axis, i.e. within the axial plane.
struct AugmentSpec {
    double max_rotation_deg = 5.0;
    double blur_sigma_max = 0.8;
    double contrast_low = 2.0;
    double contrast_high = 98.0;
    double contrast_jitter = 1.0;
    bool rotate = true;
    bool blur = true;
    bool contrast = true;

    static AugmentSpec disabled() {
        AugmentSpec s;
        s.rotate = s.blur = s.contrast = false;
        return s;
    }
};

Volume downscale(const Volume& v, std::uint32_t factor = 2);
Volume normalize_intensity(const Volume& v);
Volume augment(const Volume& v, const AugmentSpec& spec, Rng& rng);

// Building blocks of augment, usable on their own: in-plane rotation of each
// axial slice about the volume center (out-of-domain samples read 0), and
// separable Gaussian blur truncated at 3 sigma with reflected boundaries.
Volume rotate_axial(const Volume& v, double theta_deg);
Volume gaussian_blur(const Volume& v, double sigma);

// Deterministic phantom generator. `atrophy` in [0,1] drives ventricle
// enlargement and cortical thinning; per-call rng jitters geometry and noise.
Volume render_synthetic_brain(double atrophy, std::uint32_t x, std::uint32_t y,
                              std::uint32_t z, Rng& rng);

Volume read_volume(const std::filesystem::path& path);
void write_volume(const Volume& v, const std::filesystem::path& path);

// Exposed for tests: value below which `fraction` of the voxels lie, with
// linear interpolation between order statistics.
float volume_percentile(const std::vector<float>& values, double fraction);

}  // namespace msnn
