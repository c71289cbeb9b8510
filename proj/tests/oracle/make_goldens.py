"""Generates the synthetic test images and the frozen golden values used by
the C++ test suite (tests/golden/goldens.hpp).

Everything here is computed with independent reference implementations:
bicubic resizing via imresize_ref.py, SSIM via scikit-image
(gaussian_weights=True, sigma=1.5, use_sample_covariance=False — the standard
11x11 Gaussian formulation), PSNR directly in numpy, and a hand-rolled Adam
recurrence. Re-run with:  python3 tests/oracle/make_goldens.py
"""

import os

import numpy as np
from PIL import Image
from skimage.metrics import structural_similarity

from imresize_ref import imresize, quantize_u8, modcrop

HERE = os.path.dirname(os.path.abspath(__file__))
DATA = os.path.normpath(os.path.join(HERE, "..", "data"))
GOLDEN = os.path.normpath(os.path.join(HERE, "..", "golden"))


def luma255(rgb_u8):
    """Studio-swing BT.601 Y on the 0..255 scale from an 8-bit RGB image."""
    rgb = rgb_u8.astype(np.float64) / 255.0
    return 16.0 + 65.481 * rgb[..., 0] + 128.553 * rgb[..., 1] + 24.966 * rgb[..., 2]


def psnr255(a, b):
    mse = np.mean((a - b) ** 2)
    return 10.0 * np.log10(255.0 ** 2 / mse)


def ssim255(a, b):
    return structural_similarity(
        a, b, win_size=11, gaussian_weights=True, sigma=1.5,
        use_sample_covariance=False, data_range=255.0, K1=0.01, K2=0.03)


# ---------------------------------------------------------------- images

def synth_images():
    """Three deterministic RGB images with mixed smooth/edge/texture content.

    Sizes deliberately not multiples of 2/3/4 so the protocol exercises
    modcrop.
    """
    rng = np.random.default_rng(20240817)
    images = []
    for (h, w) in [(83, 97), (64, 64), (101, 120)]:
        yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
        base = np.stack([
            128 + 90 * np.sin(2 * np.pi * (0.031 * xx + 0.017 * yy)),
            128 + 80 * np.cos(2 * np.pi * (0.011 * xx - 0.041 * yy)),
            128 + 70 * np.sin(2 * np.pi * (0.023 * (xx + yy))),
        ], axis=-1)
        # solid rectangles for hard edges
        for _ in range(12):
            y0 = int(rng.integers(0, h - 8)); x0 = int(rng.integers(0, w - 8))
            y1 = y0 + int(rng.integers(6, 24)); x1 = x0 + int(rng.integers(6, 24))
            base[y0:y1, x0:x1] = rng.integers(0, 256, size=3)
        base += rng.normal(0, 6.0, size=base.shape)
        images.append(np.clip(np.round(base), 0, 255).astype(np.uint8))
    return images


def train_images():
    """Two deterministic 160x160 RGB images for the overfit smoke task:
    piecewise-constant blocks and oriented textures, both rich in edges that
    plain bicubic upscaling blurs."""
    rng = np.random.default_rng(7)
    h = w = 160
    a = np.zeros((h, w, 3), dtype=np.float64)
    a[:] = rng.integers(30, 220, size=3)
    for _ in range(60):
        y0 = int(rng.integers(0, h - 6)); x0 = int(rng.integers(0, w - 6))
        y1 = min(h, y0 + int(rng.integers(8, 48))); x1 = min(w, x0 + int(rng.integers(8, 48)))
        a[y0:y1, x0:x1] = rng.integers(0, 256, size=3)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    b = np.stack([
        128 + 100 * np.sign(np.sin(2 * np.pi * 0.06 * xx)),
        128 + 100 * np.sign(np.sin(2 * np.pi * 0.05 * (xx + yy))),
        128 + 90 * np.sin(2 * np.pi * (0.02 * xx + 0.05 * yy)),
    ], axis=-1)
    for _ in range(25):
        y0 = int(rng.integers(0, h - 6)); x0 = int(rng.integers(0, w - 6))
        y1 = min(h, y0 + int(rng.integers(10, 40))); x1 = min(w, x0 + int(rng.integers(10, 40)))
        b[y0:y1, x0:x1] = rng.integers(0, 256, size=3)
    return [np.clip(np.round(a), 0, 255).astype(np.uint8),
            np.clip(np.round(b), 0, 255).astype(np.uint8)]


# ---------------------------------------------------------------- goldens

def emit_array(f, ctype, name, vals, fmt):
    f.write(f"inline constexpr {ctype} {name}[{len(vals)}] = {{\n")
    line = "   "
    for v in vals:
        s = fmt(v) + ","
        if len(line) + len(s) > 98:
            f.write(line + "\n")
            line = "   "
        line += " " + s
    f.write(line + "\n};\n\n")


def main():
    os.makedirs(os.path.join(DATA, "synth"), exist_ok=True)
    os.makedirs(os.path.join(DATA, "train"), exist_ok=True)
    os.makedirs(GOLDEN, exist_ok=True)

    synths = synth_images()
    names = []
    for i, img in enumerate(synths):
        name = f"synth{i}.png"
        Image.fromarray(img).save(os.path.join(DATA, "synth", name))
        names.append(name)
    for i, img in enumerate(train_images()):
        Image.fromarray(img).save(os.path.join(DATA, "train", f"train{i}.png"))

    out = open(os.path.join(GOLDEN, "goldens.hpp"), "w")
    out.write("// Golden values for the test suite.\n")
    out.write("// Generated by tests/oracle/make_goldens.py -- do not edit by hand.\n")
    out.write("#pragma once\n\nnamespace golden {\n\n")

    dbl = lambda v: f"{v:.17g}"
    byt = lambda v: str(int(v))

    # --- bicubic resize: 8x8 grayscale downscaled x2 (antialiased path)
    rng = np.random.default_rng(99)
    src8 = rng.integers(0, 256, size=(8, 8)).astype(np.uint8)
    down = imresize(src8, 4, 4)
    emit_array(out, "unsigned char", "kResizeSrc8x8", src8.ravel(), byt)
    emit_array(out, "double", "kResizeDown4x4", down.ravel(), dbl)
    emit_array(out, "unsigned char", "kResizeDown4x4U8", quantize_u8(down).ravel(), byt)

    # --- bicubic resize: 5x7 grayscale upscaled x2 (plain kernel path)
    src57 = rng.integers(0, 256, size=(5, 7)).astype(np.uint8)
    up = imresize(src57, 10, 14)
    emit_array(out, "unsigned char", "kResizeSrc5x7", src57.ravel(), byt)
    emit_array(out, "double", "kResizeUp10x14", up.ravel(), dbl)

    # --- Adam: three steps on f(x) = x^2/2 from x0=1, lr=0.1
    b1, b2, eps, lr = 0.9, 0.999, 1e-8, 0.1
    x, m, v = 1.0, 0.0, 0.0
    trace = []
    for t in range(1, 4):
        g = x
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1 ** t)
        vh = v / (1 - b2 ** t)
        x = x - lr * mh / (np.sqrt(vh) + eps)
        trace.append(x)
    emit_array(out, "double", "kAdamTrace", trace, dbl)

    # --- SSIM / PSNR on a deterministic pair of Y planes (40x48)
    ph, pw = 40, 48
    ya = rng.integers(0, 256, size=(ph, pw)).astype(np.float64)
    yb = np.clip(ya + rng.normal(0, 12.0, size=(ph, pw)), 0, 255)
    yb = np.floor(yb + 0.5)
    out.write(f"inline constexpr int kPlaneH = {ph};\ninline constexpr int kPlaneW = {pw};\n\n")
    emit_array(out, "unsigned char", "kPlaneA", ya.astype(np.uint8).ravel(), byt)
    emit_array(out, "unsigned char", "kPlaneB", yb.astype(np.uint8).ravel(), byt)
    out.write(f"inline constexpr double kPlaneSsim = {ssim255(ya, yb):.17g};\n")
    out.write(f"inline constexpr double kPlanePsnr = {psnr255(ya, yb):.17g};\n\n")

    # --- full bicubic-baseline protocol on the synthetic trio, scales 2/3/4:
    # modcrop -> LR (antialiased bicubic, quantized) -> SR (bicubic, quantized)
    # -> luma -> shave scale -> PSNR/SSIM
    out.write("struct ProtocolGolden { int scale; double mean_psnr; double mean_ssim; "
              "double psnr[3]; double ssim[3]; };\n")
    rows = []
    for s in (2, 3, 4):
        psnrs, ssims = [], []
        for img in synths:
            hr = modcrop(img, s)
            lr = quantize_u8(imresize(hr, hr.shape[0] // s, hr.shape[1] // s))
            sr = quantize_u8(imresize(lr, hr.shape[0], hr.shape[1]))
            y_hr = luma255(hr)[s:-s, s:-s]
            y_sr = luma255(sr)[s:-s, s:-s]
            psnrs.append(psnr255(y_sr, y_hr))
            ssims.append(ssim255(y_sr, y_hr))
        rows.append((s, np.mean(psnrs), np.mean(ssims), psnrs, ssims))
    out.write("inline constexpr ProtocolGolden kProtocol[3] = {\n")
    for s, mp, ms, ps, ss in rows:
        out.write(f"    {{{s}, {mp:.17g}, {ms:.17g}, "
                  f"{{{', '.join(f'{p:.17g}' for p in ps)}}}, "
                  f"{{{', '.join(f'{v:.17g}' for v in ss)}}}}},\n")
    out.write("};\n\n")
    out.write("inline constexpr const char* kSynthNames[3] = {"
              + ", ".join(f'"{n}"' for n in names) + "};\n\n")
    out.write("}  // namespace golden\n")
    out.close()
    print("wrote", os.path.join(GOLDEN, "goldens.hpp"))
    for s, mp, ms, _, _ in rows:
        print(f"  x{s}: mean PSNR {mp:.4f} dB, mean SSIM {ms:.5f}")


if __name__ == "__main__":
    main()
