"""Geometric substrate tour: overlap scores, clearance field, ray casting.

Run: python3 demos/demo_geometry_and_clearance.py
"""

import math

import numpy as np

from parkbench.geometry import (
    Polygon,
    Pose2D,
    build_esdf,
    esdf_query,
    footprint,
    overlap_score,
    rasterize_scene,
    ray_cast_fan,
    segments_of,
)


def rect(cx, cy, hx, hy):
    return Polygon([(cx - hx, cy - hy), (cx + hx, cy - hy),
                    (cx + hx, cy + hy), (cx - hx, cy + hy)])


def main():
    print("=== Overlap scores (intersection over the smaller area) ===\n")
    slot = rect(0, 0, 2.7, 1.35)
    for label, pose in [("centered in slot", Pose2D(-1.25, 0, 0)),
                        ("half out of slot", Pose2D(-3.5, 0, 0)),
                        ("rotated 30 deg", Pose2D(-1.25, 0, math.radians(30))),
                        ("far away", Pose2D(-9, 0, 0))]:
        body = footprint(pose, length=4.5, width=1.9, rear_overhang=1.0)
        print(f"  {label:18s} overlap = {overlap_score(body, slot):.3f}")
    print("\n  a parked car needs overlap > 0.9 plus heading within 75 degrees")

    print("\n=== Normalized clearance field ===\n")
    boundary = rect(0, 0, 8, 8)
    pillar = rect(3, 3, 1, 1)
    grid = rasterize_scene(boundary, [pillar], resolution=0.1)
    esdf = build_esdf(grid, d0=1.0)
    for label, p in [("inside the pillar", (3.0, 3.0)),
                     ("0.5 m from pillar", (3.0, 1.5)),
                     ("open space", (-4.0, -4.0)),
                     ("0.3 m from a wall", (-7.7, 0.0))]:
        print(f"  {label:18s} clearance = {esdf_query(esdf, p):.2f}")
    print("\n  0 means touching, 1 means at least the safety distance (1 m) away")

    print("\n=== Ray fan (the vehicle's 36-beam privileged range sensor) ===\n")
    segments = segments_of(boundary, [pillar])
    angles = np.arange(8) * (2 * math.pi / 8)
    dists = ray_cast_fan(segments, (0.0, 0.0), angles, max_range=10.0)
    for a, d in zip(angles, dists):
        bar = "#" * int(round(2 * d))
        print(f"  {math.degrees(a):5.0f} deg  {d:5.2f} m  {bar}")
    assert dists.max() <= 10.0
    print("\n  the north-east beam stops early: that's the pillar")


if __name__ == "__main__":
    main()
