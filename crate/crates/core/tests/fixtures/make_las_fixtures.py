#!/usr/bin/env python3
"""Hand-encode small LAS fixtures and decode them back independently.

Writes fmt0.las, fmt1.las, fmt6.las and expected.json next to this script.
The encoder packs fields with `struct` directly from the ASPRS LAS 1.2/1.4
layouts; the decoder re-reads the written bytes with separate offsets so the
expected values do not come from the same code path that produced them.
"""

import json
import os
import struct

HERE = os.path.dirname(os.path.abspath(__file__))


def header(version_minor, fmt, record_len, n_points, scale, offset, mins, maxs):
    size = {2: 227, 3: 235, 4: 375}[version_minor]
    h = bytearray(size)
    h[0:4] = b"LASF"
    h[24] = 1
    h[25] = version_minor
    h[26:58] = b"fixture".ljust(32, b"\0")
    h[58:90] = b"make_las_fixtures.py".ljust(32, b"\0")
    struct.pack_into("<HH", h, 90, 1, 2020)
    struct.pack_into("<H", h, 94, size)
    struct.pack_into("<I", h, 96, size)  # no VLRs
    struct.pack_into("<I", h, 100, 0)
    struct.pack_into("<B", h, 104, fmt)
    struct.pack_into("<H", h, 105, record_len)
    legacy = n_points if fmt <= 5 else 0
    struct.pack_into("<I", h, 107, legacy)
    struct.pack_into("<3d", h, 131, *scale)
    struct.pack_into("<3d", h, 155, *offset)
    struct.pack_into(
        "<6d", h, 179, maxs[0], mins[0], maxs[1], mins[1], maxs[2], mins[2]
    )
    if version_minor == 4:
        struct.pack_into("<Q", h, 247, n_points)
    return h


def legacy_record(fmt, record_len, p):
    r = bytearray(record_len)
    struct.pack_into("<iiiH", r, 0, p["raw_x"], p["raw_y"], p["raw_z"], p["intensity"])
    r[14] = (p["return_number"] & 7) | ((p["num_returns"] & 7) << 3) | (p.get("flags", 0) << 6)
    r[15] = p["class_byte"]
    struct.pack_into("<b", r, 16, p["scan_angle_rank"])
    r[17] = 0
    struct.pack_into("<H", r, 18, 7)
    if fmt == 1:
        struct.pack_into("<d", r, 20, p["gps_time"])
    return r


def extended_record(record_len, p):
    r = bytearray(record_len)
    struct.pack_into("<iiiH", r, 0, p["raw_x"], p["raw_y"], p["raw_z"], p["intensity"])
    r[14] = (p["return_number"] & 15) | ((p["num_returns"] & 15) << 4)
    r[15] = 0
    r[16] = p["class_byte"]
    r[17] = 0
    struct.pack_into("<h", r, 18, p["scan_angle_raw"])
    struct.pack_into("<H", r, 20, 7)
    struct.pack_into("<d", r, 22, p["gps_time"])
    return r


FIXTURES = {
    "fmt0.las": dict(
        minor=2,
        fmt=0,
        record_len=20,
        scale=(0.01, 0.01, 0.001),
        offset=(500000.0, 4500000.0, 0.0),
        points=[
            dict(raw_x=100, raw_y=-250, raw_z=12345, intensity=812,
                 return_number=1, num_returns=2, class_byte=0b00100010,
                 scan_angle_rank=-12, flags=1),
            dict(raw_x=-7, raw_y=0, raw_z=-500, intensity=0,
                 return_number=2, num_returns=2, class_byte=9,
                 scan_angle_rank=30),
            dict(raw_x=2147483647, raw_y=1, raw_z=0, intensity=65535,
                 return_number=5, num_returns=5, class_byte=0b11110001,
                 scan_angle_rank=0, flags=3),
        ],
    ),
    "fmt1.las": dict(
        minor=2,
        fmt=1,
        record_len=32,  # 28 + 4 extra bytes per record
        scale=(0.001, 0.001, 0.01),
        offset=(100.0, 200.0, -10.0),
        points=[
            dict(raw_x=1500, raw_y=2500, raw_z=300, intensity=41,
                 return_number=1, num_returns=1, class_byte=7,
                 scan_angle_rank=-90, gps_time=123456.789),
            dict(raw_x=-1500, raw_y=0, raw_z=1000, intensity=1023,
                 return_number=3, num_returns=4, class_byte=10,
                 scan_angle_rank=17, gps_time=0.5),
        ],
    ),
    "fmt6.las": dict(
        minor=4,
        fmt=6,
        record_len=30,
        scale=(0.01, 0.01, 0.01),
        offset=(600000.0, 4000000.0, 0.0),
        points=[
            dict(raw_x=12, raw_y=34, raw_z=56, intensity=300,
                 return_number=2, num_returns=3, class_byte=17,
                 scan_angle_raw=2500, gps_time=1.25),
            dict(raw_x=-12, raw_y=-34, raw_z=-56, intensity=7,
                 return_number=15, num_returns=15, class_byte=18,
                 scan_angle_raw=-5000, gps_time=2.5),
            dict(raw_x=0, raw_y=0, raw_z=0, intensity=1,
                 return_number=1, num_returns=1, class_byte=200,
                 scan_angle_raw=15000, gps_time=3.75),
        ],
    ),
}


def encode(spec):
    pts = spec["points"]
    xs = [p["raw_x"] * spec["scale"][0] + spec["offset"][0] for p in pts]
    ys = [p["raw_y"] * spec["scale"][1] + spec["offset"][1] for p in pts]
    zs = [p["raw_z"] * spec["scale"][2] + spec["offset"][2] for p in pts]
    out = header(spec["minor"], spec["fmt"], spec["record_len"], len(pts),
                 spec["scale"], spec["offset"],
                 (min(xs), min(ys), min(zs)), (max(xs), max(ys), max(zs)))
    for p in pts:
        if spec["fmt"] >= 6:
            out += extended_record(spec["record_len"], p)
        else:
            out += legacy_record(spec["fmt"], spec["record_len"], p)
    return bytes(out)


def decode(data):
    """Independent reader: only header offsets and per-format field tables."""
    assert data[:4] == b"LASF"
    minor = data[25]
    offset_to_points = struct.unpack_from("<I", data, 96)[0]
    fmt = data[104]
    record_len = struct.unpack_from("<H", data, 105)[0]
    count = struct.unpack_from("<I", data, 107)[0]
    if minor >= 4 and count == 0:
        count = struct.unpack_from("<Q", data, 247)[0]
    sx, sy, sz = struct.unpack_from("<3d", data, 131)
    ox, oy, oz = struct.unpack_from("<3d", data, 155)
    points = []
    for i in range(count):
        base = offset_to_points + i * record_len
        rx, ry, rz = struct.unpack_from("<3i", data, base)
        intensity = struct.unpack_from("<H", data, base + 12)[0]
        if fmt >= 6:
            bits = data[base + 14]
            rn, nr = bits & 0x0F, bits >> 4
            cls = data[base + 16]
            angle = struct.unpack_from("<h", data, base + 18)[0] * 0.006
        else:
            bits = data[base + 14]
            rn, nr = bits & 0x07, (bits >> 3) & 0x07
            cls = data[base + 15] & 0x1F
            angle = float(struct.unpack_from("<b", data, base + 16)[0])
        points.append(dict(
            x=rx * sx + ox, y=ry * sy + oy, z=rz * sz + oz,
            intensity=float(intensity), scan_angle=angle,
            num_returns=nr, return_number=rn, class_code=cls,
        ))
    return dict(version_minor=minor, point_format=fmt, record_length=record_len,
                point_count=count, points=points)


def main():
    expected = {}
    for name, spec in FIXTURES.items():
        data = encode(spec)
        with open(os.path.join(HERE, name), "wb") as f:
            f.write(data)
        expected[name] = decode(data)
    with open(os.path.join(HERE, "expected.json"), "w") as f:
        json.dump(expected, f, indent=2, sort_keys=True)
        f.write("\n")


if __name__ == "__main__":
    main()
