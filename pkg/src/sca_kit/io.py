"""Instance files and hashing.

Dense arrays live in raw little-endian float64 files (row-major, complex
values interleaved as re/im pairs) next to a small JSON header whose file
references are relative to the header's directory.
"""

import hashlib
import json
from pathlib import Path

import numpy as np

from .ee import EeInstance, ee_random_instance
from .lasso import LassoInstance, random_instance as lasso_random
from .mimo import MimoBcInstance, random_instance as mimo_random

F64 = np.dtype("<f8")


def write_array(path, a):
    a = np.ascontiguousarray(a)
    if np.iscomplexobj(a):
        a = np.stack([a.real, a.imag], axis=-1)
    Path(path).write_bytes(a.astype(F64).tobytes(order="C"))


def read_array(path, shape, complex_=False):
    raw = np.frombuffer(Path(path).read_bytes(), dtype=F64)
    expected = int(np.prod(shape)) * (2 if complex_ else 1)
    if raw.size != expected:
        raise ValueError(f"{path}: expected {expected} float64 values, found {raw.size}")
    if complex_:
        raw = raw.reshape(-1, 2)
        return (raw[:, 0] + 1j * raw[:, 1]).reshape(shape)
    return raw.reshape(shape).astype(float)


def load_json(path):
    path = Path(path)
    with path.open() as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a JSON object")
    return data


def _dump(path, header):
    Path(path).write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")


def _need(d, *keys):
    missing = [k for k in keys if k not in d]
    if missing:
        raise ValueError(f"missing field(s): {', '.join(missing)}")


# lasso and basis pursuit share the {A, b} layout

def save_lasso(inst, path):
    path = Path(path)
    stem = path.with_suffix("")
    write_array(f"{stem}_A.bin", inst.A)
    write_array(f"{stem}_b.bin", inst.b)
    n, k = inst.A.shape
    _dump(path, {"n": n, "k": k, "mu": inst.mu,
                 "matrix_file": f"{stem.name}_A.bin", "vector_file": f"{stem.name}_b.bin"})
    return path


def load_matrix_pair(header, base):
    _need(header, "n", "k", "matrix_file", "vector_file")
    n, k = int(header["n"]), int(header["k"])
    A = read_array(Path(base) / header["matrix_file"], (n, k))
    b = read_array(Path(base) / header["vector_file"], (n,))
    return A, b


def lasso_from_header(header, base=".", seed=None):
    """Instance from a header with files or with generator parameters."""
    if "matrix_file" in header:
        A, b = load_matrix_pair(header, base)
        _need(header, "mu")
        return LassoInstance(A, b, float(header["mu"]))
    _need(header, "n", "k")
    inst, _ = lasso_random(
        int(header["n"]), int(header["k"]), density=float(header.get("density", 0.1)),
        noise_var=float(header.get("noise_var", 1e-4)),
        seed=int(header.get("seed", 0) if seed is None else seed),
        mu_ratio=float(header.get("mu_ratio", 0.1)))
    return inst


def load_lasso(path):
    path = Path(path)
    return lasso_from_header(load_json(path), path.parent)


# MIMO broadcast channel

def save_mimo(inst, path, P_dB=None):
    path = Path(path)
    stem = path.with_suffix("")
    write_array(f"{stem}_H.bin", inst.H)
    header = {"K": inst.K, "nT": inst.nT, "nR": inst.nR,
              "P_dB": float(10 * np.log10(inst.P)) if P_dB is None else P_dB,
              "channel_file": f"{stem.name}_H.bin"}
    _dump(path, header)
    return path


def mimo_from_header(header, base=".", seed=None):
    _need(header, "K", "nT", "nR", "P_dB")
    K, nT, nR = int(header["K"]), int(header["nT"]), int(header["nR"])
    if "channel_file" in header:
        H = read_array(Path(base) / header["channel_file"], (K, nR, nT), complex_=True)
        return MimoBcInstance.from_db(H, float(header["P_dB"]))
    return mimo_random(K, nT, nR, float(header["P_dB"]),
                       seed=int(header.get("seed", 0) if seed is None else seed))


def load_mimo(path):
    path = Path(path)
    return mimo_from_header(load_json(path), path.parent)


# energy efficiency: small enough to inline the arrays

def save_ee(inst, path):
    path = Path(path)
    _dump(path, {"K": inst.K, "w": inst.w.tolist(), "phi": inst.phi.tolist(),
                 "sigma2": inst.sigma2.tolist(), "Pc": inst.Pc,
                 "pmin": inst.pmin.tolist(), "pmax": inst.pmax.tolist()})
    return path


def ee_from_header(header, base=".", seed=None):
    if "w" in header:
        _need(header, "w", "phi", "sigma2", "Pc", "pmin", "pmax")
        return EeInstance(np.array(header["w"], dtype=float), header["phi"], header["sigma2"],
                          header["Pc"], header["pmin"], header["pmax"])
    _need(header, "K", "M")
    return ee_random_instance(int(header["K"]), int(header["M"]),
                              eps=float(header.get("epsilon", 0.01)),
                              seed=int(header.get("seed", 0) if seed is None else seed))


def load_ee(path):
    path = Path(path)
    return ee_from_header(load_json(path), path.parent)


def instance_hash(inst):
    """SHA-256 over the instance's numeric content."""
    h = hashlib.sha256()
    if isinstance(inst, LassoInstance):
        parts = [inst.A, inst.b, np.array([inst.mu])]
    elif isinstance(inst, MimoBcInstance):
        parts = [inst.H, np.array([inst.P])]
    elif isinstance(inst, EeInstance):
        parts = [inst.w, inst.phi, inst.sigma2, np.array([inst.Pc]), inst.pmin, inst.pmax]
    elif isinstance(inst, tuple):
        parts = list(inst)
    else:
        raise TypeError(f"cannot hash {type(inst).__name__}")
    for a in parts:
        a = np.ascontiguousarray(a)
        h.update(str(a.shape).encode())
        h.update(a.astype(np.complex128 if np.iscomplexobj(a) else F64).tobytes())
    return h.hexdigest()
