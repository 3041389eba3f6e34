"""Builds the mini instance-segmentation corpus and counts its cutouts.

The count is computed here from masks rasterized with scikit-image,
independently of the Rust decoder, and written to expected.json.
"""

import json
import pathlib

import numpy as np
from PIL import Image
from skimage.draw import ellipse, polygon

ROOT = pathlib.Path(__file__).parent
W, H = 160, 128
MIN_AREA = 1024
N_IMAGES = 20
CATEGORIES = ["person", "dog", "car"]


def rle_counts(mask):
    flat = mask.flatten(order="F").astype(np.uint8)
    counts, cur, run = [], 0, 0
    for v in flat:
        if v != cur:
            counts.append(run)
            cur, run = v, 0
        run += 1
    counts.append(run)
    return counts


def rle_string(counts):
    out = []
    for i, c in enumerate(counts):
        x = c - counts[i - 2] if i > 2 else c
        more = True
        while more:
            ch = x & 0x1F
            x >>= 5
            more = (x != -1) if (ch & 0x10) else (x != 0)
            if more:
                ch |= 0x20
            out.append(chr(ch + 48))
    return "".join(out)


def large_shape(rng):
    kind = rng.choice(["rect", "tri", "ellipse"])
    if kind == "rect":
        w, h = rng.integers(36, 70, size=2)
        x0, y0 = rng.integers(0, W - w), rng.integers(0, H - h)
        return [x0, y0, x0 + w, y0, x0 + w, y0 + h, x0, y0 + h]
    if kind == "tri":
        s = rng.integers(56, 90)
        x0, y0 = rng.integers(0, W - s), rng.integers(0, H - s)
        return [x0, y0 + s, x0 + s / 2, y0, x0 + s, y0 + s]
    a, b = rng.integers(22, 40, size=2)
    cx, cy = rng.integers(a, W - a), rng.integers(b, H - b)
    t = np.linspace(0, 2 * np.pi, 24, endpoint=False)
    pts = np.stack([cx + a * np.cos(t), cy + b * np.sin(t)], axis=1)
    return [round(float(v), 2) for v in pts.flatten()]


def small_shape(rng):
    w, h = rng.integers(3, 20, size=2)
    x0, y0 = rng.integers(0, W - w), rng.integers(0, H - h)
    return [x0, y0, x0 + w, y0, x0 + w, y0 + h, x0, y0 + h]


def raster(poly):
    xs = np.array(poly[0::2], dtype=float)
    ys = np.array(poly[1::2], dtype=float)
    m = np.zeros((H, W), dtype=bool)
    rr, cc = polygon(ys - 0.5, xs - 0.5, shape=(H, W))
    m[rr, cc] = True
    return m


def main():
    rng = np.random.default_rng(20)
    large_per_image = rng.permutation([2] * 17 + [1] * 3)
    images, annotations = [], []
    (ROOT / "images").mkdir(exist_ok=True)
    ann_id = 1
    counted, skipped_small, skipped_zero = 0, 0, 0
    for i in range(N_IMAGES):
        coarse = rng.integers(120, 200, size=(H // 16, W // 16, 3), dtype=np.uint8)
        pixels = np.repeat(np.repeat(coarse, 16, axis=0), 16, axis=1)
        shapes = [large_shape(rng) for _ in range(large_per_image[i])]
        shapes += [small_shape(rng) for _ in range(rng.integers(0, 3))]
        rng.shuffle(shapes)
        if i % 5 == 0:
            shapes.append("empty")
        for poly in shapes:
            if poly == "empty":
                mask = np.zeros((H, W), dtype=bool)
                seg = {"counts": rle_counts(mask), "size": [H, W]}
            else:
                mask = raster(poly)
                enc = rng.integers(0, 3)
                if enc == 0:
                    seg = [[float(v) for v in poly]]
                elif enc == 1:
                    seg = {"counts": rle_counts(mask), "size": [H, W]}
                else:
                    seg = {"counts": rle_string(rle_counts(mask)), "size": [H, W]}
            area = int(mask.sum())
            if area == 0:
                skipped_zero += 1
            elif area < MIN_AREA:
                assert area < MIN_AREA * 0.5, area
                skipped_small += 1
            else:
                assert area > MIN_AREA * 1.1, area
                counted += 1
            pixels[mask] = rng.integers(0, 255, size=3, dtype=np.uint8)
            annotations.append(
                {
                    "id": ann_id,
                    "image_id": i + 1,
                    "category_id": int(rng.integers(1, len(CATEGORIES) + 1)),
                    "segmentation": seg,
                    "iscrowd": 0 if isinstance(seg, list) else 1,
                }
            )
            ann_id += 1
        name = f"img_{i:02d}.png"
        Image.fromarray(pixels).save(ROOT / "images" / name)
        images.append({"id": i + 1, "file_name": name, "width": W, "height": H})
    manifest = {
        "images": images,
        "categories": [{"id": k + 1, "name": n} for k, n in enumerate(CATEGORIES)],
        "annotations": annotations,
    }
    (ROOT / "annotations.json").write_text(json.dumps(manifest, indent=1) + "\n")
    expected = {
        "min_area": MIN_AREA,
        "cutouts": counted,
        "skipped_below_min_area": skipped_small,
        "skipped_zero_area": skipped_zero,
    }
    (ROOT / "expected.json").write_text(json.dumps(expected, indent=1) + "\n")
    print(expected)


if __name__ == "__main__":
    main()
