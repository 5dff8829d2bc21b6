#!/usr/bin/env python3
"""Forward-pass dump from an independent PyTorch build of the refinement U-Net.

Reads a DRUMTNSR weight archive, builds the network with torch.nn modules named
after the archive grammar, runs one seeded input through it and writes a dump
archive ("input", "act.<stage>", "output") for `drums weights --parity`.

Exit status 77 when torch is unavailable so test drivers can skip.
"""

import argparse
import struct
import sys

import numpy as np

try:
    import torch
    from torch import nn
except ImportError:  # pragma: no cover
    print("torch not available", file=sys.stderr)
    sys.exit(77)

MAGIC = b"DRUMTNSR"
REAL32, COMPLEX64 = 1, 2


def read_archive(path):
    with open(path, "rb") as f:
        buf = f.read()
    if buf[:8] != MAGIC:
        raise ValueError(f"{path}: bad magic")
    version, count = struct.unpack_from("<II", buf, 8)
    if version != 1:
        raise ValueError(f"{path}: unsupported version {version}")
    off, out = 16, {}
    for _ in range(count):
        (n,) = struct.unpack_from("<I", buf, off)
        off += 4
        name = buf[off : off + n].decode("utf-8")
        off += n
        dtype, ndim = struct.unpack_from("<II", buf, off)
        off += 8
        dims = struct.unpack_from(f"<{ndim}Q", buf, off)
        off += 8 * ndim
        count_f = int(np.prod(dims)) * (2 if dtype == COMPLEX64 else 1)
        data = np.frombuffer(buf, dtype="<f4", count=count_f, offset=off).copy()
        off += 4 * count_f
        if dtype == COMPLEX64:
            data = data[0::2] + 1j * data[1::2]
        out[name] = data.reshape(dims)
    return out


def write_archive(path, tensors):
    with open(path, "wb") as f:
        f.write(MAGIC + struct.pack("<II", 1, len(tensors)))
        for name, arr in tensors.items():
            raw = name.encode("utf-8")
            arr = np.asarray(arr, dtype=np.float32)
            f.write(struct.pack("<I", len(raw)) + raw)
            f.write(struct.pack("<II", REAL32, arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            f.write(arr.astype("<f4").tobytes())


class Block(nn.Module):
    def __init__(self, cin, cout, bias):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, padding=1, bias=bias)
        self.bn1 = nn.BatchNorm2d(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1, bias=bias)
        self.bn2 = nn.BatchNorm2d(cout)

    def forward(self, x):
        x = torch.relu(self.bn1(self.conv1(x)))
        return torch.relu(self.bn2(self.conv2(x)))


class Up(Block):
    def __init__(self, cin, cout, bias):
        super().__init__(2 * cout, cout, bias)
        self.up = nn.ConvTranspose2d(cin, cout, 2, stride=2)


class UNet(nn.Module):
    def __init__(self, levels, base, cin, cout, bias, dropout):
        super().__init__()
        self.levels = levels
        prev = cin
        for level in range(levels + 1):
            setattr(self, f"enc{level}", Block(prev, base << level, bias))
            prev = base << level
        self.dropout = nn.Dropout(dropout)
        for level in reversed(range(levels)):
            setattr(self, f"dec{level}", Up(prev, base << level, bias))
            prev = base << level
        self.head = nn.Conv2d(prev, cout, 1)

    def forward(self, x, trace):
        skips = []
        for level in range(self.levels + 1):
            if level:
                x = nn.functional.max_pool2d(x, 2)
            x = getattr(self, f"enc{level}")(x)
            trace[f"enc{level}"] = x
            if level < self.levels:
                skips.append(x)
        x = self.dropout(x)
        for level in reversed(range(self.levels)):
            dec = getattr(self, f"dec{level}")
            x = dec(torch.cat([skips[level], dec.up(x)], dim=1))
            trace[f"dec{level}"] = x
        return self.head(x)


def build(archive):
    version, levels, base, cin, cout, bias, dropout = archive["arch"].ravel()[:7]
    if int(version) != 1:
        raise ValueError(f"unknown architecture version {int(version)}")
    net = UNet(int(levels), int(base), int(cin), int(cout), bool(bias), float(dropout))
    state = net.state_dict()
    missing = [k for k in state if k not in archive and not k.endswith("num_batches_tracked")]
    if missing:
        raise ValueError(f"weight archive lacks {missing[:3]}")
    for key in state:
        if key in archive:
            state[key] = torch.from_numpy(archive[key].astype(np.float32))
    net.load_state_dict(state)
    return net.eval()


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("weights")
    ap.add_argument("dump")
    ap.add_argument("--size", type=int, default=128)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument(
        "--precision",
        choices=["float64", "float32"],
        default="float64",
        help="arithmetic of the reference pass; float32 accumulation alone drifts by ~1e-4 "
        "on deep random-weight activations",
    )
    args = ap.parse_args()

    torch.set_num_threads(1)
    archive = read_archive(args.weights)
    net = build(archive)
    dtype = torch.float64 if args.precision == "float64" else torch.float32
    net = net.to(dtype)
    trainable = sum(p.numel() for p in net.parameters())
    print(f"trainable parameters {trainable}")

    cin = int(archive["arch"].ravel()[3])
    rng = np.random.default_rng(args.seed)
    x = rng.standard_normal((cin, args.size, args.size)).astype(np.float32)
    trace = {}
    with torch.no_grad():
        y = net(torch.from_numpy(x).to(dtype)[None], trace)
    dump = {"input": x}
    dump.update({f"act.{k}": v[0].float().numpy() for k, v in trace.items()})
    dump["output"] = y[0].float().numpy()
    write_archive(args.dump, dump)


if __name__ == "__main__":
    main()
