#!/usr/bin/env python3
"""Reference resampler for the golden image fixtures.

Bilinear, half-pixel centers, source coordinates clamped to the image,
exact rational arithmetic, rounded half up. Run from this directory.
"""
from fractions import Fraction
from math import floor


def pattern(w, h, k):
    return [[((x * 37 + y * 91 + c * 53 + k * 17 + (x * y) % 23) % 256) for c in range(3)]
            for y in range(h) for x in range(w)]


def write_ppm(name, w, h, px):
    with open(name, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(bytes(v for p in px for v in p))


def coord(dst, out, inp):
    s = (Fraction(2 * dst + 1, 2) * Fraction(inp, out)) - Fraction(1, 2)
    if s <= 0:
        return 0, 0, Fraction(0)
    i0 = floor(s)
    if i0 >= inp - 1:
        return inp - 1, inp - 1, Fraction(0)
    return i0, i0 + 1, s - i0


def resize(px, w, h, ow, oh):
    out = []
    for y in range(oh):
        y0, y1, fy = coord(y, oh, h)
        for x in range(ow):
            x0, x1, fx = coord(x, ow, w)
            p = []
            for c in range(3):
                v = ((1 - fx) * (1 - fy) * px[y0 * w + x0][c] + fx * (1 - fy) * px[y0 * w + x1][c]
                     + (1 - fx) * fy * px[y1 * w + x0][c] + fx * fy * px[y1 * w + x1][c])
                p.append(min(255, floor(v + Fraction(1, 2))))
            out.append(p)
    return out


def crop(px, w, x0, y0, cw, ch):
    return [px[(y0 + y) * w + x0 + x] for y in range(ch) for x in range(cw)]


cam1 = (50, 37, pattern(50, 37, 1))
cam2 = (23, 61, pattern(23, 61, 2))
write_ppm("cam1_in.ppm", *cam1)
write_ppm("cam2_in.ppm", *cam2)
vla = resize(cam1[2], cam1[0], cam1[1], 224, 144) + resize(cam2[2], cam2[0], cam2[1], 224, 80)
write_ppm("vla_out.ppm", 224, 224, vla)

grasp = (64, 48, pattern(64, 48, 3))
write_ppm("grasp_in.ppm", *grasp)
big = resize(grasp[2], grasp[0], grasp[1], 320, 240)
write_ppm("diffusion_out.ppm", 320, 240, big)
write_ppm("crop_0_0.ppm", 288, 216, crop(big, 320, 0, 0, 288, 216))
write_ppm("crop_32_24.ppm", 288, 216, crop(big, 320, 32, 24, 288, 216))
