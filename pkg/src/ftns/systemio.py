"""System description files.

JSON documents with fields N, D, dims, label and nested coefficient maps

    "A": {"mu,nu":      {"i j k": [[..]], ...}, ...}
    "B": {"mu,rho,nu":  {"i":     [[..]], ...}, ...}

Index-tuple keys are 1-based, space separated and must be canonical
(non-decreasing); the matrix is the common value of the symmetric
coefficient at every arrangement of that tuple.  Rank-0 coefficients use
the empty-string key.  Matrix entries are JSON numbers or complex-literal
strings like "1.5+2j".  Omitted slots are zero.  parse -> serialize ->
parse is the identity on systems.
"""

from __future__ import annotations

import json

import numpy as np

from .systems import FTNSSystem
from .tensors import MultiIndexTensor, sym_index_basis

__all__ = ["load_system", "dump_system", "loads_system", "dumps_system", "SystemFormatError"]


class SystemFormatError(ValueError):
    """Malformed system description file."""


def _parse_scalar(v):
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, str):
        try:
            return complex(v.replace(" ", ""))
        except ValueError as exc:
            raise SystemFormatError(f"bad numeric entry {v!r}") from exc
    raise SystemFormatError(f"bad numeric entry {v!r}")


def _emit_scalar(z):
    z = complex(z)
    if z.imag == 0.0:
        return z.real
    return f"{z.real:.17g}{z.imag:+.17g}j"


def _parse_matrix(rows, shape, where):
    try:
        mat = np.array([[_parse_scalar(v) for v in row] for row in rows], dtype=complex)
    except TypeError as exc:
        raise SystemFormatError(f"{where}: matrix is not a list of lists") from exc
    if mat.shape != shape:
        raise SystemFormatError(f"{where}: matrix shape {mat.shape}, expected {shape}")
    return mat


def _parse_tuple_key(key, rank, D, where):
    key = key.strip()
    if key == "":
        tup = ()
    else:
        try:
            tup = tuple(int(tok) - 1 for tok in key.split())
        except ValueError as exc:
            raise SystemFormatError(f"{where}: bad index tuple {key!r}") from exc
    if len(tup) != rank:
        raise SystemFormatError(f"{where}: tuple {key!r} has {len(tup)} indices, expected {rank}")
    if any(not (0 <= t < D) for t in tup):
        raise SystemFormatError(f"{where}: tuple {key!r} out of range 1..{D}")
    if tuple(sorted(tup)) != tup:
        raise SystemFormatError(f"{where}: tuple {key!r} is not canonical (non-decreasing)")
    return tup


def loads_system(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SystemFormatError(
            f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    for req in ("N", "D", "dims"):
        if req not in doc:
            raise SystemFormatError(f"missing required field {req!r}")
    N = int(doc["N"])
    D = int(doc["D"])
    dims = [int(n) for n in doc["dims"]]
    if len(dims) != N:
        raise SystemFormatError(f"dims has length {len(dims)}, expected N = {N}")
    label = str(doc.get("label", ""))

    A = {}
    for slot_key, entry_map in (doc.get("A") or {}).items():
        where = f"A[{slot_key}]"
        parts = slot_key.split(",")
        if len(parts) != 2:
            raise SystemFormatError(f"{where}: slot key must be 'mu,nu'")
        mu, nu = (int(p) for p in parts)
        if not (0 <= mu < N and 0 <= nu <= min(mu + 1, N - 1)):
            raise SystemFormatError(f"{where}: slot not admissible for N = {N}")
        rank = mu - nu + 1
        shape = (dims[mu], dims[nu])
        index_map = {}
        for key, rows in entry_map.items():
            tup = _parse_tuple_key(key, rank, D, where)
            index_map[tup] = _parse_matrix(rows, shape, f"{where}[{key!r}]")
        A[(mu, nu)] = MultiIndexTensor.from_index_dict(D, rank, shape, index_map)

    B = {}
    for slot_key, entry_map in (doc.get("B") or {}).items():
        where = f"B[{slot_key}]"
        parts = slot_key.split(",")
        if len(parts) != 3:
            raise SystemFormatError(f"{where}: slot key must be 'mu,rho,nu'")
        mu, rho, nu = (int(p) for p in parts)
        if not (0 <= nu <= mu < N and 1 <= rho <= mu - nu + 1):
            raise SystemFormatError(f"{where}: slot not admissible for N = {N}")
        rank = mu - nu - rho + 1
        shape = (dims[mu], dims[nu])
        index_map = {}
        for key, rows in entry_map.items():
            tup = _parse_tuple_key(key, rank, D, where)
            index_map[tup] = _parse_matrix(rows, shape, f"{where}[{key!r}]")
        B[(mu, rho, nu)] = MultiIndexTensor.from_index_dict(D, rank, shape, index_map)

    return FTNSSystem(N, D, dims, A, B, label)


def load_system(path):
    with open(path, "r", encoding="utf-8") as fh:
        return loads_system(fh.read())


def _tensor_entry_map(t, tol=0.0):
    entries = {}
    for tup in sym_index_basis(t.spatial_dim, t.rank):
        mat = t[tup]
        if np.max(np.abs(mat)) > tol:
            key = " ".join(str(i + 1) for i in tup)
            entries[key] = [[_emit_scalar(v) for v in row] for row in mat]
    return entries


def dumps_system(sys):
    doc = {
        "label": sys.label,
        "N": sys.N,
        "D": sys.spatial_dim,
        "dims": list(sys.dims),
        "A": {},
        "B": {},
    }
    for (mu, nu) in sorted(sys.A):
        entries = _tensor_entry_map(sys.A[(mu, nu)])
        if entries:
            doc["A"][f"{mu},{nu}"] = entries
    for (mu, rho, nu) in sorted(sys.B):
        entries = _tensor_entry_map(sys.B[(mu, rho, nu)])
        if entries:
            doc["B"][f"{mu},{rho},{nu}"] = entries
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def dump_system(sys, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_system(sys))


# -- iterative reduction parameter files ---------------------------------------
#
# JSON with tensor fields D0, D, Dbar0, Dbar and per-level maps Dmu, Dbarmu;
# index tuples are 1-based FULL tuples here (these tensors are not
# symmetric), e.g. "Dbar": {"1 2 1": [[0.5]], ...}.  Omitted entries are 0.


def _parse_full_tensor(entry_map, D, rank, shape, where):
    arr = np.zeros((D,) * rank + shape, dtype=complex)
    for key, rows in entry_map.items():
        key = key.strip()
        tup = () if key == "" else tuple(int(tok) - 1 for tok in key.split())
        if len(tup) != rank:
            raise SystemFormatError(f"{where}: tuple {key!r} has {len(tup)} indices, "
                                    f"expected {rank}")
        if any(not (0 <= t < D) for t in tup):
            raise SystemFormatError(f"{where}: tuple {key!r} out of range 1..{D}")
        arr[tup] = _parse_matrix(rows, shape, f"{where}[{key!r}]")
    from .tensors import MultiIndexTensor
    return MultiIndexTensor(D, rank, shape, arr)


def _emit_full_tensor(t, tol=0.0):
    entries = {}
    import itertools
    for tup in itertools.product(range(t.spatial_dim), repeat=t.rank):
        mat = t[tup]
        if np.max(np.abs(mat)) > tol:
            entries[" ".join(str(i + 1) for i in tup)] = \
                [[_emit_scalar(v) for v in row] for row in mat]
    return entries


def load_reduction_params(path, sys):
    """Load IterativeReductionParams for ``sys`` from a JSON file."""
    from .reduction import IterativeReductionParams
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SystemFormatError(
                f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
            ) from exc
    D, n0 = sys.spatial_dim, sys.dims[0]
    params = IterativeReductionParams.zero(sys)
    if "D0" in doc:
        params.D0 = _parse_full_tensor(doc["D0"], D, 1, (n0, n0), "D0")
    if "D" in doc:
        params.D = _parse_full_tensor(doc["D"], D, 2, (n0, n0), "D")
    if "Dbar0" in doc:
        params.Dbar0 = _parse_full_tensor(doc["Dbar0"], D, 2, (n0, n0), "Dbar0")
    if "Dbar" in doc:
        params.Dbar = _parse_full_tensor(doc["Dbar"], D, 3, (n0, n0), "Dbar")
    for name, store, extra in (("Dmu", params.Dmu, 0), ("Dbarmu", params.Dbarmu, 1)):
        for key, entry_map in (doc.get(name) or {}).items():
            mu = int(key)
            if not (1 <= mu <= sys.N - 1):
                raise SystemFormatError(f"{name}[{key}]: level out of range")
            store[mu] = _parse_full_tensor(entry_map, D, mu + extra,
                                           (sys.dims[mu], n0), f"{name}[{key}]")
    problems = params.validate_for(sys)
    if problems:
        raise SystemFormatError("bad reduction parameters: " + "; ".join(problems))
    return params


def dump_reduction_params(params, path):
    doc = {
        "D0": _emit_full_tensor(params.D0),
        "D": _emit_full_tensor(params.D),
        "Dbar0": _emit_full_tensor(params.Dbar0),
        "Dbar": _emit_full_tensor(params.Dbar),
        "Dmu": {str(mu): _emit_full_tensor(t) for mu, t in sorted(params.Dmu.items())},
        "Dbarmu": {str(mu): _emit_full_tensor(t)
                   for mu, t in sorted(params.Dbarmu.items())},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def dump_matrix(M, path, labels=None):
    """Write a complex matrix as CSV keyed by the basis ordering."""
    M = np.asarray(M)
    lines = []
    if labels is not None:
        lines.append("# basis: " + " | ".join(labels))
    for row in M:
        lines.append(",".join(_format_cplx(v) for v in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_matrix(path):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rows.append([complex(tok) for tok in line.split(",")])
    return np.array(rows, dtype=complex)


def _format_cplx(v):
    v = complex(v)
    if v.imag == 0.0:
        return f"{v.real:.17g}"
    return f"{v.real:.17g}{v.imag:+.17g}j"
