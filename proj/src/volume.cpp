#include "msnn/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include "msnn/error.hpp"

namespace msnn {

namespace {

// the on-disk format is little-endian; raw reads/writes below rely on it
static_assert(std::endian::native == std::endian::little);

constexpr char kMagic[4] = {'R', 'V', 'O', 'L'};
constexpr std::size_t kMaxVoxels = std::size_t(1) << 31;

std::string dims_string(const Volume& v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%ux%ux%u", v.dims[0], v.dims[1], v.dims[2]);
    return buf;
}

}  // namespace

Volume::Volume(std::uint32_t x, std::uint32_t y, std::uint32_t z) {
    dims[0] = x;
    dims[1] = y;
    dims[2] = z;
    voxels.assign(static_cast<std::size_t>(x) * y * z, 0.0f);
}

Volume downscale(const Volume& v, std::uint32_t factor) {
    if (factor < 1) throw config_error("downscale: factor must be >= 1");
    for (int a = 0; a < 3; ++a) {
        if (factor > v.dims[a])
            throw config_error("downscale: factor " + std::to_string(factor) +
                               " exceeds volume extent " + std::to_string(v.dims[a]) +
                               " on axis " + std::to_string(a));
    }
    if (factor == 1) return v;
    Volume out(v.dims[0] / factor, v.dims[1] / factor, v.dims[2] / factor);
    const double inv = 1.0 / (static_cast<double>(factor) * factor * factor);
    for (std::uint32_t z = 0; z < out.dims[2]; ++z)
        for (std::uint32_t y = 0; y < out.dims[1]; ++y)
            for (std::uint32_t x = 0; x < out.dims[0]; ++x) {
                double acc = 0.0;
                for (std::uint32_t dz = 0; dz < factor; ++dz)
                    for (std::uint32_t dy = 0; dy < factor; ++dy)
                        for (std::uint32_t dx = 0; dx < factor; ++dx)
                            acc += v.at(x * factor + dx, y * factor + dy, z * factor + dz);
                out.at(x, y, z) = static_cast<float>(acc * inv);
            }
    return out;
}

Volume normalize_intensity(const Volume& v) {
    Volume out = v;
    if (v.voxels.empty()) return out;
    auto [mn_it, mx_it] = std::minmax_element(v.voxels.begin(), v.voxels.end());
    const float mn = *mn_it, mx = *mx_it;
    if (mx == mn) {
        std::fill(out.voxels.begin(), out.voxels.end(), 0.0f);
        return out;
    }
    const float inv = 1.0f / (mx - mn);
    for (auto& x : out.voxels) x = (x - mn) * inv;
    return out;
}

// Rotates each axial (Z) slice about the volume center by `theta_deg`,
// sampling the source bilinearly; samples falling outside the slice read 0.
Volume rotate_axial(const Volume& v, double theta_deg) {
    Volume out(v.dims[0], v.dims[1], v.dims[2]);
    const double theta = theta_deg * M_PI / 180.0;
    const double c = std::cos(theta), s = std::sin(theta);
    const double cx = (v.dims[0] - 1) * 0.5, cy = (v.dims[1] - 1) * 0.5;
    const std::int64_t X = v.dims[0], Y = v.dims[1];
    for (std::uint32_t z = 0; z < v.dims[2]; ++z) {
        const float* slice = v.voxels.data() + static_cast<std::size_t>(z) * X * Y;
        for (std::uint32_t y = 0; y < v.dims[1]; ++y)
            for (std::uint32_t x = 0; x < v.dims[0]; ++x) {
                // inverse-map the output voxel into the source slice
                const double dx = x - cx, dy = y - cy;
                const double sx = c * dx + s * dy + cx;
                const double sy = -s * dx + c * dy + cy;
                const std::int64_t x0 = static_cast<std::int64_t>(std::floor(sx));
                const std::int64_t y0 = static_cast<std::int64_t>(std::floor(sy));
                const double fx = sx - x0, fy = sy - y0;
                double acc = 0.0;
                for (int j = 0; j < 2; ++j)
                    for (int i = 0; i < 2; ++i) {
                        const std::int64_t xi = x0 + i, yj = y0 + j;
                        if (xi < 0 || xi >= X || yj < 0 || yj >= Y) continue;
                        const double w = (i ? fx : 1.0 - fx) * (j ? fy : 1.0 - fy);
                        acc += w * slice[xi + X * yj];
                    }
                out.at(x, y, z) = static_cast<float>(acc);
            }
    }
    return out;
}

namespace {

std::vector<double> gaussian_kernel(double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * (i / sigma) * (i / sigma));
        sum += k[i + radius];
    }
    for (auto& w : k) w /= sum;
    return k;
}

// Separable 1D convolution along `axis` with reflected boundaries.
void blur_axis(Volume& v, const std::vector<double>& kernel, int axis) {
    const int radius = static_cast<int>(kernel.size() / 2);
    const std::int64_t extent = v.dims[axis];
    const std::int64_t strides[3] = {
        1, v.dims[0], static_cast<std::int64_t>(v.dims[0]) * v.dims[1]};
    const std::int64_t stride = strides[axis];
    const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    std::vector<float> line(static_cast<std::size_t>(extent));
    for (std::uint32_t u = 0; u < v.dims[a1]; ++u)
        for (std::uint32_t w = 0; w < v.dims[a2]; ++w) {
            const std::int64_t base = static_cast<std::int64_t>(u) * strides[a1] +
                                      static_cast<std::int64_t>(w) * strides[a2];
            for (std::int64_t t = 0; t < extent; ++t)
                line[static_cast<std::size_t>(t)] = v.voxels[static_cast<std::size_t>(base + t * stride)];
            for (std::int64_t t = 0; t < extent; ++t) {
                double acc = 0.0;
                for (int k = -radius; k <= radius; ++k) {
                    std::int64_t idx = t + k;
                    if (idx < 0) idx = -idx - 1;
                    if (idx >= extent) idx = 2 * extent - idx - 1;
                    acc += kernel[static_cast<std::size_t>(k + radius)] *
                           line[static_cast<std::size_t>(idx)];
                }
                v.voxels[static_cast<std::size_t>(base + t * stride)] = static_cast<float>(acc);
            }
        }
}

}  // namespace

Volume gaussian_blur(const Volume& v, double sigma) {
    if (sigma <= 0.0) return v;
    const auto kernel = gaussian_kernel(sigma);
    if (kernel.size() == 1) return v;
    Volume out = v;
    for (int axis = 0; axis < 3; ++axis) blur_axis(out, kernel, axis);
    return out;
}

float volume_percentile(const std::vector<float>& values, double fraction) {
    if (values.empty()) throw data_error("percentile of empty value set");
    std::vector<float> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    const double pos = std::clamp(fraction, 0.0, 1.0) * (sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - lo;
    return static_cast<float>(sorted[lo] * (1.0 - frac) + sorted[hi] * frac);
}

Volume augment(const Volume& v, const AugmentSpec& spec, Rng& rng) {
    Volume out = v;
    if (spec.rotate && spec.max_rotation_deg > 0.0) {
        double theta = rng.uniform(0.0, spec.max_rotation_deg);
        if (rng.bernoulli(0.5)) theta = -theta;
        out = rotate_axial(out, theta);
    }
    if (spec.blur && spec.blur_sigma_max > 0.0) {
        const double sigma = rng.uniform(0.0, spec.blur_sigma_max);
        out = gaussian_blur(out, sigma);
    }
    if (spec.contrast) {
        const double lo_pct =
            std::clamp(spec.contrast_low + rng.uniform(-spec.contrast_jitter, spec.contrast_jitter),
                       0.0, 100.0);
        const double hi_pct =
            std::clamp(spec.contrast_high + rng.uniform(-spec.contrast_jitter, spec.contrast_jitter),
                       0.0, 100.0);
        const float lo = volume_percentile(out.voxels, lo_pct / 100.0);
        const float hi = volume_percentile(out.voxels, hi_pct / 100.0);
        if (hi > lo) {
            const float inv = 1.0f / (hi - lo);
            for (auto& x : out.voxels) x = (x - lo) * inv;
        }
    }
    for (auto& x : out.voxels) x = std::clamp(x, 0.0f, 1.0f);
    return out;
}

Volume render_synthetic_brain(double atrophy, std::uint32_t X, std::uint32_t Y,
                              std::uint32_t Z, Rng& rng) {
    if (X < 16 || Y < 16 || Z < 16)
        throw config_error("render_synthetic_brain: each extent must be >= 16");
    atrophy = std::clamp(atrophy, 0.0, 1.0);
    Volume out(X, Y, Z);

    // per-subject anatomical jitter
    const double jx = rng.uniform(0.97, 1.03), jy = rng.uniform(0.97, 1.03),
                 jz = rng.uniform(0.97, 1.03);
    const double ox = rng.uniform(-0.02, 0.02) * X, oy = rng.uniform(-0.02, 0.02) * Y,
                 oz = rng.uniform(-0.02, 0.02) * Z;

    const double cx = (X - 1) * 0.5 + ox, cy = (Y - 1) * 0.5 + oy, cz = (Z - 1) * 0.5 + oz;
    const double ax = 0.42 * X * jx, ay = 0.44 * Y * jy, az = 0.40 * Z * jz;

    // ventricle enlarges and the bright cortical band thins with atrophy
    const double vent_r = 0.10 + 0.18 * atrophy;
    const double band_inner = 0.82 + 0.10 * atrophy;

    for (std::uint32_t z = 0; z < Z; ++z)
        for (std::uint32_t y = 0; y < Y; ++y)
            for (std::uint32_t x = 0; x < X; ++x) {
                const double rx = (x - cx) / ax, ry = (y - cy) / ay, rz = (z - cz) / az;
                const double r = std::sqrt(rx * rx + ry * ry + rz * rz);
                double value = 0.0;
                if (r < 1.0) {
                    if (r < vent_r)
                        value = 0.05;  // CSF-filled cavity
                    else if (r > band_inner)
                        value = 0.80;  // cortical band
                    else
                        value = 0.55;  // bulk tissue
                }
                value += rng.normal(0.0, 0.02);
                out.at(x, y, z) = static_cast<float>(std::clamp(value, 0.0, 1.0));
            }
    return out;
}

Volume read_volume(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open volume file " + path.string());
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw data_error("not a volume file (bad magic): " + path.string());
    std::uint32_t dims[3];
    if (!in.read(reinterpret_cast<char*>(dims), sizeof(dims)))
        throw data_error("truncated volume header: " + path.string());
    const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    if (dims[0] == 0 || dims[1] == 0 || dims[2] == 0 || n > kMaxVoxels)
        throw data_error("volume dims out of range: " + path.string());
    Volume v(dims[0], dims[1], dims[2]);
    if (!in.read(reinterpret_cast<char*>(v.voxels.data()),
                 static_cast<std::streamsize>(n * sizeof(float))))
        throw data_error("truncated volume payload: " + path.string());
    char extra;
    if (in.read(&extra, 1))
        throw data_error("volume payload longer than header dims " + dims_string(v) + ": " +
                         path.string());
    return v;
}

void write_volume(const Volume& v, const std::filesystem::path& path) {
    if (v.voxels.size() != static_cast<std::size_t>(v.dims[0]) * v.dims[1] * v.dims[2])
        throw data_error("volume dims disagree with voxel count");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot create volume file " + path.string());
    out.write(kMagic, 4);
    out.write(reinterpret_cast<const char*>(v.dims), sizeof(v.dims));
    out.write(reinterpret_cast<const char*>(v.voxels.data()),
              static_cast<std::streamsize>(v.voxels.size() * sizeof(float)));
    if (!out) throw io_error("short write on volume file " + path.string());
}

}  // namespace msnn
