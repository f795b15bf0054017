# Released freely under the GNU General Public License version 3. USE AT YOUR OWN RISK.
"""
PNG output for fields, partitions and profile curves (Pillow only).

Images put grid axis 0 horizontally and axis 1 vertically, y pointing up.
3D fields are shown through their middle slice along the last axis.
"""

import os

import numpy as np
from PIL import Image, ImageDraw, ImageFont

# Dark blue -> teal -> yellow ramp
RAMP = np.array([
    [68, 1, 84],
    [59, 82, 139],
    [33, 145, 140],
    [94, 201, 98],
    [253, 231, 37],
], dtype=float)

PHASE_COLORS = [
    (31, 119, 180), (255, 127, 14), (44, 160, 44), (214, 39, 40),
    (148, 103, 189), (140, 86, 75), (227, 119, 194), (127, 127, 127),
]
VOID_COLOR = (255, 255, 255)
OUTSIDE_COLOR = (200, 200, 200)
MIN_SIDE = 256


def _slice2d(values):
    values = np.asarray(values)
    if values.ndim == 3:
        return values[:, :, values.shape[2] // 2]
    return values


def _to_image(rgb):
    # (nx, ny, 3) with axis 0 = x -> rows = y, top row = largest y
    img = Image.fromarray(np.ascontiguousarray(np.transpose(rgb, (1, 0, 2))[::-1]).astype(np.uint8), "RGB")
    scale = max(1, int(np.ceil(MIN_SIDE / min(img.size))))
    if scale > 1:
        img = img.resize((img.size[0] * scale, img.size[1] * scale), Image.NEAREST)
    return img


def _save(img, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    img.save(path, format="PNG")
    return path


def colorize(values, vmin=None, vmax=None):
    values = np.asarray(values, dtype=float)
    vmin = float(np.min(values)) if vmin is None else vmin
    vmax = float(np.max(values)) if vmax is None else vmax
    t = np.zeros_like(values) if vmax <= vmin else np.clip((values - vmin) / (vmax - vmin), 0.0, 1.0)
    pos = t * (len(RAMP) - 1)
    lo = np.floor(pos).astype(int).clip(0, len(RAMP) - 2)
    frac = (pos - lo)[..., None]
    return RAMP[lo] * (1.0 - frac) + RAMP[lo + 1] * frac


def heatmap_png(path, values, mask=None):
    values = _slice2d(values)
    rgb = colorize(values)
    if mask is not None:
        rgb[~_slice2d(mask)] = OUTSIDE_COLOR
    return _save(_to_image(rgb), path)


def partition_png(path, supports, mask=None):
    """One color per phase, white for void, grey outside the domain mask."""
    first = _slice2d(supports[0])
    rgb = np.empty(first.shape + (3,))
    rgb[...] = VOID_COLOR
    for i, support in enumerate(supports):
        rgb[_slice2d(support)] = PHASE_COLORS[i % len(PHASE_COLORS)]
    if mask is not None:
        rgb[~_slice2d(mask)] = OUTSIDE_COLOR
    return _save(_to_image(rgb), path)


def loglog_png(path, curves, size=(720, 480), title=None):
    """
    Log-log polylines. ``curves`` maps a label to (x, y); non-positive or
    missing points are dropped.
    """
    width, height = size
    margin = 60
    img = Image.new("RGB", size, (255, 255, 255))
    draw = ImageDraw.Draw(img)
    font = ImageFont.load_default()

    cleaned = {}
    for label, (xs, ys) in curves.items():
        pts = [(float(x), float(y)) for x, y in zip(xs, ys)
               if x is not None and y is not None and x > 0 and y > 0 and np.isfinite(y)]
        if pts:
            cleaned[label] = np.log10(np.array(pts))
    draw.rectangle([margin, margin // 2, width - margin // 2, height - margin], outline=(0, 0, 0))
    if title:
        draw.text((margin, 5), title, fill=(0, 0, 0), font=font)
    if not cleaned:
        return _save(img, path)

    allpts = np.vstack(list(cleaned.values()))
    lo, hi = allpts.min(axis=0), allpts.max(axis=0)
    span = np.where(hi - lo > 1e-12, hi - lo, 1.0)
    lo = lo - 0.05 * span
    span = span * 1.1

    def to_px(p):
        x = margin + (p[0] - lo[0]) / span[0] * (width - 1.5 * margin)
        y = (height - margin) - (p[1] - lo[1]) / span[1] * (height - 1.5 * margin)
        return (float(x), float(y))

    for n, (label, pts) in enumerate(cleaned.items()):
        color = PHASE_COLORS[n % len(PHASE_COLORS)]
        pixels = [to_px(p) for p in pts]
        if len(pixels) > 1:
            draw.line(pixels, fill=color, width=2)
        for x, y in pixels:
            draw.ellipse([x - 2, y - 2, x + 2, y + 2], fill=color)
        draw.text((width - 2 * margin - 40, margin // 2 + 8 + 14 * n), label, fill=color, font=font)

    draw.text((margin, height - margin + 8), f"log10 r: {lo[0]:.2f} .. {lo[0] + span[0]:.2f}", fill=(0, 0, 0), font=font)
    draw.text((margin, height - margin + 22), f"log10 value: {lo[1]:.2f} .. {lo[1] + span[1]:.2f}",
              fill=(0, 0, 0), font=font)
    return _save(img, path)
