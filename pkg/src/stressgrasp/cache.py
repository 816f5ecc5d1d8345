"""Binary cache of precomputed stress maps (FGBM format).

Layout, all little-endian:

    b"FGBM"  u32 version
    u32 K  u32 V  u32 N
    f64 mu  f64 lambda  f64 sigma_max  f64 contact_radius
    32 bytes mesh sha256  32 bytes map-settings sha256  32 bytes config sha256
    f64 volume  f64[3] centroid  f64[9] second moment (row-major)
    N x (f64[3] position, f64[3] normal, u32 triangle)
    f64[9K x 12] A_cal  f64[9K x 3N] B_cal      (row-major)
    32 bytes sha256 of everything above
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bem import MaterialParams, StressMaps
from .errors import CacheMismatch, ParseError
from .geom import ContactPoint, GeometricMoments, SurfaceMesh

MAGIC = b"FGBM"
VERSION = 1
_HEAD = struct.Struct("<4sIIII4d32s32s32s13d")
_CONTACT = struct.Struct("<6dI")


def mesh_hash(mesh: SurfaceMesh) -> bytes:
    return bytes.fromhex(mesh.content_hash())


@dataclass
class CacheData:
    material: MaterialParams
    contact_radius: float
    moments: GeometricMoments
    contacts: list[ContactPoint]
    maps: StressMaps
    n_vertices: int
    mesh_sha: bytes
    map_sha: bytes
    config_sha: bytes
    file_sha: str = ""

    @property
    def K(self) -> int:
        return self.maps.K

    @property
    def N(self) -> int:
        return len(self.contacts)


def expected_size(K: int, N: int) -> int:
    return _HEAD.size + N * _CONTACT.size + 8 * (9 * K * 12 + 9 * K * 3 * N) + 32


def to_bytes(data: CacheData) -> bytes:
    K, N = data.K, data.N
    if data.maps.N != N:
        raise ValueError("stress maps and contacts disagree")
    mom = data.moments
    mat = data.material
    parts = [
        _HEAD.pack(
            MAGIC, VERSION, K, data.n_vertices, N,
            mat.mu, mat.lam, mat.sigma_max, data.contact_radius,
            data.mesh_sha, data.map_sha, data.config_sha,
            mom.volume, *np.asarray(mom.centroid, float), *np.asarray(mom.second_moment, float).ravel(),
        )
    ]
    for c in data.contacts:
        parts.append(_CONTACT.pack(*np.asarray(c.position, float), *np.asarray(c.normal, float), int(c.triangle)))
    parts.append(np.ascontiguousarray(data.maps.A_cal, dtype="<f8").tobytes())
    parts.append(np.ascontiguousarray(data.maps.B_cal, dtype="<f8").tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def from_bytes(raw: bytes, source: str = "<cache>") -> CacheData:
    if len(raw) < _HEAD.size + 32:
        raise ParseError(f"{source}: truncated cache")
    head = _HEAD.unpack_from(raw, 0)
    magic, version, K, V, N = head[:5]
    if magic != MAGIC:
        raise ParseError(f"{source}: not an FGBM cache")
    if version != VERSION:
        raise CacheMismatch(f"{source}: cache version {version}, expected {VERSION}")
    if len(raw) != expected_size(K, N):
        raise ParseError(f"{source}: size {len(raw)} does not match K={K}, N={N}")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ParseError(f"{source}: checksum mismatch (corrupt cache)")
    mu, lam, sigma, radius = head[5:9]
    mesh_sha, map_sha, config_sha = head[9:12]
    nums = np.array(head[12:])
    moments = GeometricMoments(volume=float(nums[0]), centroid=nums[1:4].copy(), second_moment=nums[4:13].reshape(3, 3).copy())
    off = _HEAD.size
    contacts = []
    for i in range(N):
        vals = _CONTACT.unpack_from(raw, off)
        off += _CONTACT.size
        contacts.append(ContactPoint(np.array(vals[:3]), np.array(vals[3:6]), int(vals[6]), i))
    na = 9 * K * 12
    A = np.frombuffer(raw, dtype="<f8", count=na, offset=off).reshape(9 * K, 12).astype(float)
    off += 8 * na
    B = np.frombuffer(raw, dtype="<f8", count=9 * K * 3 * N, offset=off).reshape(9 * K, 3 * N).astype(float)
    return CacheData(
        material=MaterialParams(mu, lam, sigma),
        contact_radius=radius,
        moments=moments,
        contacts=contacts,
        maps=StressMaps(A_cal=A, B_cal=B),
        n_vertices=V,
        mesh_sha=mesh_sha,
        map_sha=map_sha,
        config_sha=config_sha,
        file_sha=digest.hex(),
    )


def write_cache(path, data: CacheData) -> str:
    """Write the cache; returns the hex checksum that identifies it."""
    raw = to_bytes(data)
    Path(path).write_bytes(raw)
    data.file_sha = raw[-32:].hex()
    return data.file_sha


def read_cache(path) -> CacheData:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return from_bytes(raw, str(path))


def check_settings(data: CacheData, map_sha_hex: str, source: str = "<cache>") -> None:
    """Raise CacheMismatch when the cache was built with other map settings."""
    if data.map_sha.hex() != map_sha_hex:
        raise CacheMismatch(
            f"{source}: cache was built for different material or contact settings "
            f"(E/nu/contact_radius); rerun precompute"
        )
