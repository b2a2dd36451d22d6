#!/usr/bin/env python3
"""Regenerates src/gabor_bank.inc, the fixed filter bank behind SIFID-lite.

Each complex Gabor filter g(x) g(y) exp(i (kx x + ky y)) with an isotropic
Gaussian envelope factorises into an x and a y 1-D complex filter. The real
part of the 2-D response is the even filter, the imaginary part the odd one.
Both 1-D tables are divided by the envelope mass sum(g), so the 2-D kernel is
normalised by the 2-D envelope mass.

    python3 tools/gen_gabor_bank.py > src/gabor_bank.inc
"""
import math

ORIENTATIONS = [0.0, math.pi / 4, math.pi / 2, 3 * math.pi / 4]
SCALES = [(1.5, 4.0, 4), (3.0, 8.0, 8)]  # (sigma, wavelength, radius)


def table(sigma, k, radius):
    env = [math.exp(-(t * t) / (2 * sigma * sigma)) for t in range(-radius, radius + 1)]
    mass = sum(env)
    re = [e * math.cos(k * t) / mass for e, t in zip(env, range(-radius, radius + 1))]
    im = [e * math.sin(k * t) / mass for e, t in zip(env, range(-radius, radius + 1))]
    return re, im


def fmt(values):
    return ", ".join(repr(v) for v in values)


def main():
    print("// Generated by tools/gen_gabor_bank.py; do not edit by hand.")
    print("// {radius, {x_re}, {x_im}, {y_re}, {y_im}} per (scale, orientation); taps -radius..radius.")
    for si, (sigma, wavelength, radius) in enumerate(SCALES):
        for theta in ORIENTATIONS:
            k = 2 * math.pi / wavelength
            kx = k * math.cos(theta)
            ky = k * math.sin(theta)
            xr, xi = table(sigma, kx, radius)
            yr, yi = table(sigma, ky, radius)
            deg = round(math.degrees(theta))
            print(f"// sigma {sigma}, wavelength {wavelength}, orientation {deg} deg")
            print("{%d, {%s}, {%s}, {%s}, {%s}}," % (radius, fmt(xr), fmt(xi), fmt(yr), fmt(yi)))


if __name__ == "__main__":
    main()
