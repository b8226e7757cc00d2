#include "sdpadv/spatial.hpp"

#include <cmath>
#include <string>

#include "sdpadv/error.hpp"

SDPADV_NAMESPACE_BEGIN

Real AffineParams::deviation_norm() const {
  const auto id = identity().values;
  double s = 0;
  for (std::size_t k = 0; k < 6; ++k) s += double(values[k] - id[k]) * double(values[k] - id[k]);
  return Real(std::sqrt(s));
}

Tensor identity_thetas(std::size_t batch) {
  Tensor t({batch, 6});
  for (std::size_t i = 0; i < batch; ++i) {
    t[i * 6 + 0] = 1;
    t[i * 6 + 4] = 1;
  }
  return t;
}

namespace {

void check_theta(const Tensor& th, std::size_t height, std::size_t width) {
  if (th.rank() != 2 || th.dim(1) != 6)
    throw DimensionError("affine grid: expected theta[B,6], got " + to_string(th.shape()));
  if (height < 2 || width < 2) throw ConfigError("affine grid: height and width must be >= 2");
}

// Per-axis coefficients: out = a*u + b*v*rx + (e + 1)*cx for x, where
// u = j - cx, v = i - cy in pixel mode and u = mu, v = nu, cx = 1, rx = 1,
// with the "+1" offset dropped, in normalized mode.
struct GridBasis {
  bool pixel;
  Real cx, cy;  // (W-1)/2, (H-1)/2
  Real rx, ry;  // cx/cy, cy/cx

  Real u(std::size_t j) const {
    return pixel ? Real(j) - cx : Real(-1) + Real(2) * Real(j) / Real(2 * cx);
  }
  Real v(std::size_t i) const {
    return pixel ? Real(i) - cy : Real(-1) + Real(2) * Real(i) / Real(2 * cy);
  }
};

Var affine_grid(Var theta, std::size_t height, std::size_t width, bool pixel) {
  const Tensor& th = theta.value();
  check_theta(th, height, width);
  const std::size_t B = th.dim(0);
  GridBasis basis{pixel, Real(width - 1) / 2, Real(height - 1) / 2, 0, 0};
  basis.rx = pixel ? basis.cx / basis.cy : Real(1);
  basis.ry = pixel ? basis.cy / basis.cx : Real(1);

  Tensor grid({B, height, width, 2});
  for (std::size_t b = 0; b < B; ++b) {
    const Real* t = th.ptr() + b * 6;
    const Real a = t[0], bb = t[1], e = t[2], c = t[3], d = t[4], f = t[5];
    Real* out = grid.ptr() + b * height * width * 2;
    for (std::size_t i = 0; i < height; ++i) {
      const Real v = basis.v(i);
      for (std::size_t j = 0; j < width; ++j) {
        const Real u = basis.u(j);
        Real* o = out + (i * width + j) * 2;
        if (pixel) {
          o[0] = (a * u + bb * (v * basis.rx)) + (e + 1) * basis.cx;
          o[1] = (c * (u * basis.ry) + d * v) + (f + 1) * basis.cy;
        } else {
          o[0] = a * u + bb * v + e;
          o[1] = c * u + d * v + f;
        }
      }
    }
  }

  return theta.tape().record(
      OpKind::AffineGrid, std::move(grid), {theta},
      [theta, basis, height, width, B](Tape& t, const Tensor& g) {
        Tensor& dth = t.grad_of(theta);
        const Real sx = basis.pixel ? basis.cx : Real(1);
        const Real sy = basis.pixel ? basis.cy : Real(1);
        for (std::size_t b = 0; b < B; ++b) {
          const Real* gp = g.ptr() + b * height * width * 2;
          double da = 0, db = 0, de = 0, dc = 0, dd = 0, df = 0;
          for (std::size_t i = 0; i < height; ++i) {
            const Real v = basis.v(i);
            for (std::size_t j = 0; j < width; ++j) {
              const Real u = basis.u(j);
              const Real gx = gp[(i * width + j) * 2];
              const Real gy = gp[(i * width + j) * 2 + 1];
              da += gx * u;
              db += gx * v * basis.rx;
              de += gx * sx;
              dc += gy * u * basis.ry;
              dd += gy * v;
              df += gy * sy;
            }
          }
          Real* d = dth.ptr() + b * 6;
          d[0] += Real(da);
          d[1] += Real(db);
          d[2] += Real(de);
          d[3] += Real(dc);
          d[4] += Real(dd);
          d[5] += Real(df);
        }
      });
}

struct Corners {
  bool any = false;
  std::ptrdiff_t x0 = 0, y0 = 0;
  Real fx = 0, fy = 0;
};

Corners locate(Real px, Real py, std::size_t H, std::size_t W) {
  Corners c;
  if (!(px > Real(-1) && py > Real(-1) && px < Real(W) && py < Real(H))) return c;
  const Real x0 = std::floor(px), y0 = std::floor(py);
  c.any = true;
  c.x0 = std::ptrdiff_t(x0);
  c.y0 = std::ptrdiff_t(y0);
  c.fx = px - x0;
  c.fy = py - y0;
  return c;
}

Var sample(Var image, Var grid, bool normalized) {
  Tape& tape = same_tape(image, grid);
  const Tensor& img = image.value();
  const Tensor& gr = grid.value();
  if (img.rank() != 4) throw DimensionError("bilinear sample: expected image[B,C,H,W], got " + to_string(img.shape()));
  if (gr.rank() != 4 || gr.dim(3) != 2 || gr.dim(0) != img.dim(0))
    throw DimensionError("bilinear sample: grid " + to_string(gr.shape()) + " does not match image " +
                         to_string(img.shape()));
  const std::size_t B = img.dim(0), C = img.dim(1), H = img.dim(2), W = img.dim(3);
  const std::size_t Ho = gr.dim(1), Wo = gr.dim(2);
  const Real sx = Real(W - 1) / 2, sy = Real(H - 1) / 2;
  const auto to_pixel = [=](const Real* g) {
    return normalized ? std::pair<Real, Real>{(g[0] + 1) * sx, (g[1] + 1) * sy}
                      : std::pair<Real, Real>{g[0], g[1]};
  };

  Tensor out({B, C, Ho, Wo});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t p = 0; p < Ho * Wo; ++p) {
      const auto [px, py] = to_pixel(gr.ptr() + (b * Ho * Wo + p) * 2);
      const Corners k = locate(px, py, H, W);
      if (!k.any) continue;
      const Real w00 = (1 - k.fx) * (1 - k.fy), w01 = k.fx * (1 - k.fy);
      const Real w10 = (1 - k.fx) * k.fy, w11 = k.fx * k.fy;
      const bool x0in = k.x0 >= 0, x1in = k.x0 + 1 < std::ptrdiff_t(W);
      const bool y0in = k.y0 >= 0, y1in = k.y0 + 1 < std::ptrdiff_t(H);
      for (std::size_t c = 0; c < C; ++c) {
        const Real* plane = img.ptr() + (b * C + c) * H * W;
        const auto at = [&](std::ptrdiff_t y, std::ptrdiff_t x) { return plane[std::size_t(y) * W + std::size_t(x)]; };
        const Real v00 = (y0in && x0in) ? at(k.y0, k.x0) : Real(0);
        const Real v01 = (y0in && x1in) ? at(k.y0, k.x0 + 1) : Real(0);
        const Real v10 = (y1in && x0in) ? at(k.y0 + 1, k.x0) : Real(0);
        const Real v11 = (y1in && x1in) ? at(k.y0 + 1, k.x0 + 1) : Real(0);
        out[(b * C + c) * Ho * Wo + p] = ((w00 * v00 + w01 * v01) + w10 * v10) + w11 * v11;
      }
    }

  return tape.record(
      OpKind::BilinearSample, std::move(out), {image, grid},
      [image, grid, normalized, B, C, H, W, Ho, Wo, sx, sy, to_pixel](Tape& t, const Tensor& g) {
        const Tensor& img = t.value(image);
        const Tensor& gr = t.value(grid);
        const bool want_img = t.requires_grad(image), want_grid = t.requires_grad(grid);
        Tensor* dimg = want_img ? &t.grad_of(image) : nullptr;
        Tensor* dgrid = want_grid ? &t.grad_of(grid) : nullptr;
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t p = 0; p < Ho * Wo; ++p) {
            const auto [px, py] = to_pixel(gr.ptr() + (b * Ho * Wo + p) * 2);
            const Corners k = locate(px, py, H, W);
            if (!k.any) continue;
            const bool x0in = k.x0 >= 0, x1in = k.x0 + 1 < std::ptrdiff_t(W);
            const bool y0in = k.y0 >= 0, y1in = k.y0 + 1 < std::ptrdiff_t(H);
            const std::size_t i00 = std::size_t(k.y0) * W + std::size_t(k.x0);
            Real dpx = 0, dpy = 0;
            for (std::size_t c = 0; c < C; ++c) {
              const std::size_t base = (b * C + c) * H * W;
              const Real go = g[(b * C + c) * Ho * Wo + p];
              if (go == 0) continue;
              if (want_grid) {
                const Real* plane = img.ptr() + base;
                const Real v00 = (y0in && x0in) ? plane[i00] : Real(0);
                const Real v01 = (y0in && x1in) ? plane[i00 + 1] : Real(0);
                const Real v10 = (y1in && x0in) ? plane[i00 + W] : Real(0);
                const Real v11 = (y1in && x1in) ? plane[i00 + W + 1] : Real(0);
                dpx += go * ((1 - k.fy) * (v01 - v00) + k.fy * (v11 - v10));
                dpy += go * ((1 - k.fx) * (v10 - v00) + k.fx * (v11 - v01));
              }
              if (want_img) {
                Real* d = dimg->ptr() + base;
                if (y0in && x0in) d[i00] += go * (1 - k.fx) * (1 - k.fy);
                if (y0in && x1in) d[i00 + 1] += go * k.fx * (1 - k.fy);
                if (y1in && x0in) d[i00 + W] += go * (1 - k.fx) * k.fy;
                if (y1in && x1in) d[i00 + W + 1] += go * k.fx * k.fy;
              }
            }
            if (want_grid) {
              Real* dg = dgrid->ptr() + (b * Ho * Wo + p) * 2;
              dg[0] += normalized ? dpx * sx : dpx;
              dg[1] += normalized ? dpy * sy : dpy;
            }
          }
      });
}

}  // namespace

Var make_grid(Var theta, std::size_t height, std::size_t width) {
  return affine_grid(theta, height, width, false);
}

Var make_pixel_grid(Var theta, std::size_t height, std::size_t width) {
  return affine_grid(theta, height, width, true);
}

Var bilinear_sample(Var image, Var grid) { return sample(image, grid, true); }

Var sample_pixels(Var image, Var pixel_grid) { return sample(image, pixel_grid, false); }

Var transform(Var theta, Var image) {
  const Tensor& x = image.value();
  if (x.rank() != 4) throw DimensionError("transform: expected image[B,C,H,W], got " + to_string(x.shape()));
  if (theta.value().rank() != 2 || theta.value().dim(0) != x.dim(0))
    throw DimensionError("transform: theta " + to_string(theta.value().shape()) + " vs image batch " +
                         std::to_string(x.dim(0)));
  return sample_pixels(image, make_pixel_grid(theta, x.dim(2), x.dim(3)));
}

SDPADV_NAMESPACE_END
