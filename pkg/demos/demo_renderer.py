"""Render the built-in cube from a few camera poses and write PPM images.

The rasterizer is deterministic by construction, so the byte output here is
reproducible across machines. Writes out/cube_*.ppm plus one golden .vcfr blob
next to them.
"""

from pathlib import Path

import numpy as np

from vcstream import quat
from vcstream.frames import write_golden
from vcstream.object_pool import ObjectKind, ObjectState, Transform
from vcstream.renderer import CameraIntrinsics, render, render_marker, unit_cube

OUT = Path(__file__).parent / "out"


def write_ppm(path, frame):
    arr = frame.rgba_array()
    with open(path, "wb") as f:
        f.write(f"P6\n{frame.width} {frame.height}\n255\n".encode())
        f.write(np.ascontiguousarray(arr[:, :, :3]).tobytes())


def main():
    OUT.mkdir(exist_ok=True)
    objects = [
        ObjectState(0, "camera", ObjectKind.CAMERA, Transform((0, 0, 3), (0, 0, 0, 1), (1, 1, 1))),
        ObjectState(1, "cube", ObjectKind.MESH, Transform.identity()),
    ]
    assets = {1: unit_cube()}
    intr = CameraIntrinsics()

    views = {
        "front": ((0.0, 0.0, 3.0), quat.IDENTITY),
        "corner": ((2.0, 1.5, 2.0), quat.multiply(
            quat.from_axis_angle((0, 1, 0), np.arctan2(2.0, 2.0)),
            quat.from_axis_angle((1, 0, 0), -0.45),
        )),
        "above": ((0.0, 3.0, 0.3), quat.from_axis_angle((1, 0, 0), -np.pi / 2 * 0.95)),
    }
    for name, (pos, rot) in views.items():
        frame = render(objects, assets, pos, quat.normalize(rot), intr, 320, 240)
        write_ppm(OUT / f"cube_{name}.ppm", frame)
        print(f"wrote {OUT / f'cube_{name}.ppm'}")

    golden = render(objects, assets, (0, 0, 3), quat.IDENTITY, intr, 64, 64)
    write_golden(OUT / "cube_front_64.vcfr", golden)
    print(f"wrote {OUT / 'cube_front_64.vcfr'} ({len(golden.data)} bytes + header)")

    marker = render_marker(513, 320, 240)
    write_ppm(OUT / "marker_513.ppm", marker)
    print(f"wrote {OUT / 'marker_513.ppm'} (32x32 id block at the origin)")


if __name__ == "__main__":
    main()
