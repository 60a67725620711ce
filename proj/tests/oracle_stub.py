#!/usr/bin/env python3
"""Test stub speaking the external map-oracle wire protocol on stdio."""
import json
import struct
import sys


def read_msg():
    header = sys.stdin.buffer.read(4)
    if len(header) < 4:
        sys.exit(0)
    (length,) = struct.unpack(">I", header)
    payload = sys.stdin.buffer.read(length)
    return json.loads(payload.decode("utf-8"))


def write_raw(data: bytes):
    sys.stdout.buffer.write(struct.pack(">I", len(data)))
    sys.stdout.buffer.write(data)
    sys.stdout.buffer.flush()


def write_msg(obj):
    write_raw(json.dumps(obj).encode("utf-8"))


def main():
    mode = sys.argv[1] if len(sys.argv) > 1 else "echo"

    hello = read_msg()
    assert hello.get("type") == "hello", hello
    if mode == "badshake":
        write_msg({"type": "hello", "version": 999})
        return
    write_msg({"type": "hello", "version": hello.get("version", 1)})

    fixture = {
        "elements": [
            {
                "class": "boundary",
                "points": [[3.5, float(i)] for i in range(20)],
                "confidence": 0.9,
            },
            {
                "class": "divider",
                "points": [[0.0, float(i)] for i in range(20)],
                "confidence": 0.7,
            },
        ]
    }

    while True:
        request = read_msg()
        if request.get("type") != "predict":
            write_msg({"error": "unknown request"})
            continue
        if mode == "garbage":
            write_raw(b'{"elements": [ this is not json')
        else:
            write_msg(fixture)


if __name__ == "__main__":
    main()
