#!/usr/bin/env python3
"""Regenerates tests/data from public sample images.

Needs numpy and scikit-image. The 512x512 Lena scan comes from the npm
`lena` package (pass the path to its lena.js with --lena).
"""

import argparse
import base64
import pathlib
import re

import numpy as np
import skimage.data as skd


def write_pgm(path, img):
    img = np.asarray(img, dtype=np.uint8)
    h, w = img.shape
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(img.tobytes())


def gray(img):
    if img.ndim == 2:
        return img.astype(np.float64)
    rgb = img[..., :3].astype(np.float64)
    return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]


def to_u8(x):
    return np.clip(np.rint(x), 0, 255).astype(np.uint8)


def lena_gray(lena_js):
    text = pathlib.Path(lena_js).read_text()
    payload = re.search(r"base64decode\(\s*'([^']+)'", text).group(1)
    raw = np.frombuffer(base64.b64decode(payload), dtype=np.uint8)
    # the scan is stored column-major; transpose to upright
    img = raw.reshape(512, 512, 3).transpose(1, 0, 2)
    return to_u8(gray(img))


def crop(img, top, left, size):
    return img[top:top + size, left:left + size]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--lena", required=True, help="path to the npm lena package's lena.js")
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "tests" / "data"))
    args = ap.parse_args()
    out = pathlib.Path(args.out)

    write_pgm(out / "set12_08.pgm", lena_gray(args.lena))

    # single-image denoising
    write_pgm(out / "s2s" / "cameraman.pgm", to_u8(crop(gray(skd.camera()), 80, 200, 96)))
    write_pgm(out / "s2s" / "astronaut.pgm", to_u8(crop(gray(skd.astronaut()), 60, 180, 96)))

    # dataset denoising: 10 training crops and 2 held-out crops
    sources = [
        ("camera", skd.camera(), (300, 40)),
        ("astronaut", skd.astronaut(), (300, 300)),
        ("coffee", skd.coffee(), (100, 200)),
        ("chelsea", skd.chelsea(), (80, 120)),
        ("coins", skd.coins(), (60, 100)),
        ("moon", skd.moon(), (200, 200)),
        ("brick", skd.brick(), (0, 0)),
        ("grass", skd.grass(), (200, 200)),
        ("gravel", skd.gravel(), (100, 300)),
        ("rocket", skd.rocket(), (100, 250)),
    ]
    for i, (name, img, (t, l)) in enumerate(sources):
        write_pgm(out / "n2v" / f"train_{i:02d}_{name}.pgm", to_u8(crop(gray(img), t, l, 128)))
    held = [
        ("clock", skd.clock(), (100, 150)),
        ("immunohistochemistry", skd.immunohistochemistry(), (200, 200)),
    ]
    for i, (name, img, (t, l)) in enumerate(held):
        write_pgm(out / "n2v" / f"heldout_{i:02d}_{name}.pgm", to_u8(crop(gray(img), t, l, 128)))


if __name__ == "__main__":
    main()
