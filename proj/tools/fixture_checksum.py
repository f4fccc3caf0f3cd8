#!/usr/bin/env python3
"""64-bit FNV-1a of a file, and a decode of HDC1 headers for eyeballing."""
import json
import struct
import sys


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


for path in sys.argv[1:]:
    data = open(path, "rb").read()
    line = f"{path}: fnv1a64=0x{fnv1a64(data):016x}"
    if data[:8] == b"HDCUBE01":
        (n,) = struct.unpack("<I", data[8:12])
        line += " header=" + json.dumps(json.loads(data[12 : 12 + n]))
    print(line)
