"""Content-addressed on-disk cache for exact ground states and optimised ansaetze."""

from __future__ import annotations

import hashlib
import json
import logging
import os
from pathlib import Path

import numpy as np
from filelock import FileLock

from .hamiltonian import HamiltonianSpec, build_hamiltonian, ground_state_exact
from .lattice import HoneycombLattice
from .statevector import StateVector

__all__ = ["cache_dir", "content_key", "ArtifactCache", "cached_ground_state"]

log = logging.getLogger(__name__)


def cache_dir() -> Path:
    env = os.environ.get("KITAEV_EDGE_CACHE")
    return Path(env) if env else Path.home() / ".cache" / "kitaev_edge"


def content_key(kind: str, **parts) -> str:
    blob = json.dumps(parts, sort_keys=True, separators=(",", ":"), default=repr)
    return f"{kind}-{hashlib.sha256(blob.encode()).hexdigest()[:20]}"


class ArtifactCache:
    """Files under one directory; writers hold a lock file per key."""

    def __init__(self, root: os.PathLike | None = None):
        self.root = Path(root) if root is not None else cache_dir()

    def path(self, key: str, suffix: str) -> Path:
        return self.root / f"{key}{suffix}"

    def lock(self, key: str) -> FileLock:
        self.root.mkdir(parents=True, exist_ok=True)
        return FileLock(str(self.root / f"{key}.lock"))

    def read_json(self, key: str) -> dict | None:
        p = self.path(key, ".json")
        return json.loads(p.read_text()) if p.exists() else None

    def write_json(self, key: str, data: dict) -> None:
        p = self.path(key, ".json")
        tmp = p.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(data, indent=1, sort_keys=True))
        tmp.replace(p)


def _lattice_key(lat: HoneycombLattice) -> dict:
    return {"name": lat.name, "n": lat.n_sites, "digest": hashlib.sha256(lat.to_json().encode()).hexdigest()[:20]}


def cached_ground_state(lat: HoneycombLattice, spec: HamiltonianSpec, cache: ArtifactCache | None = None,
                        tol: float = 1e-8) -> tuple[StateVector, dict]:
    """Exact ground state and its metadata (energy, gap, residual), computed once per (lattice, spec).

    At J = 0 every term commutes with the plaquette operators and the search
    is restricted to the vortex-free sector; otherwise the J = 0 ground state
    seeds a full-space Lanczos run for the lowest level only (no gap is reported).
    """
    cache = cache or ArtifactCache()
    key = content_key("ground", lattice=_lattice_key(lat), spec=spec.to_dict(), tol=tol)
    with cache.lock(key):
        meta = cache.read_json(key)
        sv = cache.path(key, ".sv")
        if meta is not None and sv.exists():
            return StateVector.load(sv), meta
        hs = build_hamiltonian(spec, lat)
        ws = [lat.plaquette_operator(p) for p in range(len(lat.plaquettes))]
        if spec.J == 0.0:
            gs = ground_state_exact(hs, tol=tol, symmetries=ws or None)
        else:
            seed_state, _ = cached_ground_state(lat, spec.replace(J=0.0), cache, tol)
            # one eigenpair: the second level sits among near-degenerate vortex sectors and converges slowly
            gs = ground_state_exact(hs, tol=tol, v0=seed_state.amplitudes, k=1)
        meta = {"energy": gs.energy, "gap": gs.gap, "residual": gs.residual,
                "energies": np.asarray(gs.energies).tolist(), "spec": spec.to_dict(), "lattice": _lattice_key(lat)}
        gs.state.save(sv)
        cache.write_json(key, meta)
        log.info("cached ground state %s (E0=%.10f)", key, gs.energy)
        return gs.state, meta
