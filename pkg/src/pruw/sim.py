"""End-to-end hybrid-storage system: N databases, cyclic sections, sessions,
cost accounting and snapshots.

Submodel layout: the first ``L_1`` symbols of every submodel go to part 1,
the next ``L_2`` to part 2. A part's symbols are cut into ``N`` equal
sections; section ``s`` is held by the ``r`` databases whose cyclic window
``n, n+1, ..., n+r-1 (mod N)`` covers it. Each section is further cut into
subpackets of ``K * y`` symbols.
"""

from __future__ import annotations

import io
import json
import math
import struct
import zlib
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import codec
from .errors import Corrupt, SessionError, ShapeError, VersionMismatch
from .ffmath import DEFAULT_MODULUS, PrimeField
from .planner import AllocationPlan, plan as make_plan

MAGIC = b"PRUW"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelSpec:
    M: int
    L: int
    q: int = DEFAULT_MODULUS

    def __post_init__(self):
        if self.M < 2:
            raise ShapeError(f"need at least 2 submodels, got M={self.M}")
        if self.L < 1:
            raise ShapeError(f"need L >= 1, got {self.L}")


def granule(plan: AllocationPlan) -> int:
    """Smallest L for which every part splits into whole sections and subpackets."""
    g = 1
    for p in plan.parts:
        step = plan.N * p.K * p.y
        a, b = p.fraction.numerator, p.fraction.denominator
        g = math.lcm(g, step * b // math.gcd(a, step))
    return g


def effective_length(plan: AllocationPlan, L: int) -> int:
    g = granule(plan)
    return -(-L // g) * g


@dataclass(frozen=True)
class PartLayout:
    index: int
    r: int
    K: int
    x: int
    y: int
    offset: int
    length: int
    N: int

    @property
    def section_len(self) -> int:
        return self.length // self.N

    @property
    def subpacket_len(self) -> int:
        return self.K * self.y

    @property
    def n_subpackets(self) -> int:
        return self.section_len // self.subpacket_len

    def holders(self, section: int) -> list[int]:
        """Databases holding ``section``, ascending by id."""
        return sorted((section - t) % self.N for t in range(self.r))

    def sections_of(self, db: int) -> list[int]:
        return [(db + t) % self.N for t in range(self.r)]

    def symbol_slice(self, section: int, sub: int) -> slice:
        start = self.offset + section * self.section_len + sub * self.subpacket_len
        return slice(start, start + self.subpacket_len)


@dataclass
class Database:
    """Passive store: accepts queries, answers them, applies updates."""

    id: int
    store: dict = field(default_factory=dict)  # (part, section) -> list of (y, M) arrays
    queries: dict = field(default_factory=dict)  # (part, section) -> (K, y, M)

    def symbol_count(self) -> int:
        return sum(int(s.size) for subs in self.store.values() for s in subs)

    def accept_query(self, key, vectors):
        self.queries[key] = vectors

    def answer(self, key, sub: int, F: PrimeField) -> list[int]:
        return codec.answers_for_db(self.store[key][sub], self.queries[key], F)

    def apply_update(self, key, sub: int, U, params, pos: int):
        self.store[key][sub] = codec.apply_update(self.store[key][sub], U, self.queries.get(key), params, pos)

    def end_session(self):
        self.queries.clear()


@dataclass
class Message:
    direction: str  # "up" (client -> db) or "down"
    database: int
    kind: str  # query | answer | update
    symbols: int
    counted: bool
    part: int
    section: int

    def to_dict(self) -> dict:
        return {
            "direction": self.direction,
            "database": self.database,
            "kind": self.kind,
            "symbols": self.symbols,
            "counted": self.counted,
            "part": self.part,
            "section": self.section,
        }


@dataclass
class Transcript:
    phase: str
    messages: list[Message] = field(default_factory=list)

    def log(self, *args):
        self.messages.append(Message(*args))

    def counted(self, kind: str, part: int | None = None) -> int:
        return sum(
            m.symbols for m in self.messages if m.counted and m.kind == kind and (part is None or m.part == part)
        )

    def to_jsonl(self) -> str:
        return "".join(json.dumps({"phase": self.phase, **m.to_dict()}, sort_keys=True) + "\n" for m in self.messages)


@dataclass
class CostReport:
    read: Fraction
    write: Fraction
    total: Fraction
    analytic_read: Fraction
    analytic_write: Fraction
    analytic_total: Fraction
    raw_total: Fraction  # normalized by the requested L instead of the padded one
    per_part: list[dict]
    L: int
    L_effective: int

    @property
    def matches(self) -> bool:
        return (self.read, self.write, self.total) == (self.analytic_read, self.analytic_write, self.analytic_total)

    def to_dict(self) -> dict:
        out = {}
        for name in ("read", "write", "total", "analytic_read", "analytic_write", "analytic_total", "raw_total"):
            v = getattr(self, name)
            out[name] = {"exact": str(v), "decimal": float(v)}
        out.update(L=self.L, L_effective=self.L_effective, matches=self.matches, per_part=self.per_part)
        return out


@dataclass
class Session:
    theta: int
    queries: dict  # (part, section) -> QuerySet


class SystemState:
    """N databases built from an allocation plan, plus the client's session."""

    def __init__(self, N, mu, spec, plan, L_effective, layouts, params, databases, seed, session_rng):
        self.N = N
        self.mu = Fraction(mu)
        self.spec = spec
        self.plan = plan
        self.L_effective = L_effective
        self.layouts = layouts
        self.params = params  # (part, section) -> SchemeParams
        self.databases = databases
        self.seed = seed
        self.session_rng = session_rng
        self.field = PrimeField(spec.q)
        self.session: Session | None = None

    def __eq__(self, other):
        if not isinstance(other, SystemState):
            return NotImplemented
        return snapshot(self) == snapshot(other)

    # -- helpers -----------------------------------------------------------

    def sections(self):
        for lay in self.layouts:
            for s in range(self.N):
                yield lay, s, (lay.index, s)

    def storage_counts(self) -> list[int]:
        return [db.symbol_count() for db in self.databases]

    def storage_limit(self) -> Fraction:
        return self.mu * self.spec.M * self.L_effective

    def _rng(self, rng):
        if rng is None:
            return self.session_rng
        if isinstance(rng, np.random.Generator):
            return rng
        return np.random.default_rng(rng)

    # -- sessions ----------------------------------------------------------

    def read(self, theta: int, rng=None) -> tuple[np.ndarray, Transcript]:
        """Privately download submodel ``theta``; opens a session reused by ``write``."""
        rng = self._rng(rng)
        F = self.field
        codec._check_theta(theta, self.spec.M)
        for db in self.databases:
            db.end_session()
        tr = Transcript("read")
        queries = {}
        for lay, s, key in self.sections():
            params = self.params[key]
            qs = codec.gen_queries(theta, params, rng)
            queries[key] = qs
            for pos, db_id in enumerate(lay.holders(s)):
                self.databases[db_id].accept_query(key, qs.for_db(pos))
                tr.log("up", db_id, "query", int(qs.for_db(pos).size), False, lay.index, s)
        self.session = Session(theta, queries)

        out = F.zeros(self.L_effective)
        for lay, s, key in self.sections():
            params = self.params[key]
            holders = lay.holders(s)
            for sub in range(lay.n_subpackets):
                got = []
                for db_id in holders:
                    ans = self.databases[db_id].answer(key, sub, F)
                    tr.log("down", db_id, "answer", len(ans), True, lay.index, s)
                    got.append(ans)
                block = np.stack(
                    [codec.decode([a[l] for a in got], l, params) for l in range(lay.K)], axis=1
                )  # (y, K)
                out[lay.symbol_slice(s, sub)] = block.ravel()
        return out, tr

    def write(self, theta: int, delta, rng=None) -> Transcript:
        """Privately add ``delta`` to submodel ``theta``; needs the session opened by ``read``."""
        rng = self._rng(rng)
        F = self.field
        if self.session is None:
            raise SessionError("write needs the queries of a preceding read session")
        if self.session.theta != theta:
            raise SessionError("write must target the submodel of the open read session")
        delta = F.array(delta).ravel()
        if delta.size > self.L_effective:
            raise ShapeError(f"delta has {delta.size} symbols, submodel has {self.L_effective}")
        if delta.size < self.L_effective:
            delta = np.concatenate([delta, F.zeros(self.L_effective - delta.size)])
        tr = Transcript("write")
        for lay, s, key in self.sections():
            params = self.params[key]
            holders = lay.holders(s)
            for sub in range(lay.n_subpackets):
                d = delta[lay.symbol_slice(s, sub)].reshape(lay.y, lay.K)
                packet = codec.encode_update(d, params, rng)
                for pos, db_id in enumerate(holders):
                    U = packet.scalars.get(pos)
                    if U is not None:
                        tr.log("up", db_id, "update", len(U), True, lay.index, s)
                    self.databases[db_id].apply_update(key, sub, U, params, pos)
        for db in self.databases:
            db.end_session()
        self.session = None
        return tr

    # -- audits ------------------------------------------------------------

    def audit_storage(self):
        """Fit every stored coordinate across its holders.

        Returns ``(plain, max_residual)`` where ``plain`` is the ``(M, L_eff)``
        model implied by storage. A nonzero residual means some coordinate is
        not a valid encoding.
        """
        F = self.field
        plain = F.zeros((self.spec.M, self.L_effective))
        worst = 0
        for lay, s, key in self.sections():
            params = self.params[key]
            holders = lay.holders(s)
            for sub in range(lay.n_subpackets):
                sl = lay.symbol_slice(s, sub)
                w = F.zeros((self.spec.M, lay.y, lay.K))
                for i in range(lay.y):
                    for m in range(self.spec.M):
                        values = [self.databases[d].store[key][sub][i, m] for d in holders]
                        coeffs, _, residual = codec.fit_storage_coordinate(values, params, i)
                        w[m, i] = coeffs
                        worst = max(worst, int(np.max(residual)) if residual.size else 0)
                plain[:, sl] = w.reshape(self.spec.M, -1)
        return plain, worst


def build(N: int, mu, spec: ModelSpec, seed: int = 0, model=None, plan: AllocationPlan | None = None) -> SystemState:
    """Plan, lay out and encode a system of ``N`` databases.

    ``model`` is an ``(M, L)`` array (zero-padded to the effective length); it
    defaults to all zeros. The caller keeps its own copy as ground truth.
    Passing ``plan`` skips the planner, which is how odd-parity schemes (never
    chosen by the hull) can be exercised.
    """
    if plan is None:
        plan = make_plan(N, mu)
    elif plan.N != N:
        raise ShapeError(f"plan is for N={plan.N}, not {N}")
    F = PrimeField(spec.q)
    L_eff = effective_length(plan, spec.L)
    W = F.zeros((spec.M, L_eff))
    if model is not None:
        model = F.array(model)
        if model.ndim != 2 or model.shape[0] != spec.M or model.shape[1] > L_eff:
            raise ShapeError(f"model shape {model.shape} incompatible with M={spec.M}, L_eff={L_eff}")
        W[:, : model.shape[1]] = model

    ss = np.random.SeedSequence(seed)
    const_seq, storage_seq, session_seq = ss.spawn(3)
    const_rng = np.random.default_rng(const_seq)
    storage_rng = np.random.default_rng(storage_seq)

    layouts, params = [], {}
    offset = 0
    for idx, part in enumerate(plan.parts):
        length = int(part.fraction * L_eff)
        lay = PartLayout(idx, part.r, part.K, part.x, part.y, offset, length, N)
        layouts.append(lay)
        offset += length
        consts = codec.draw_constants(F, N + part.y * part.K, const_rng)
        alphas, flat = consts[:N], consts[N:]
        fs = [flat[i * part.K: (i + 1) * part.K] for i in range(part.y)]
        for s in range(N):
            params[(idx, s)] = codec.SchemeParams.from_constants(
                part.r, part.K, spec.M, F, [alphas[d] for d in lay.holders(s)], fs
            )
    assert offset == L_eff

    databases = [Database(n) for n in range(N)]
    for lay in layouts:
        for s in range(N):
            key = (lay.index, s)
            p = params[key]
            holders = lay.holders(s)
            for db_id in holders:
                databases[db_id].store[key] = []
            for sub in range(lay.n_subpackets):
                plain = W[:, lay.symbol_slice(s, sub)].reshape(spec.M, lay.y, lay.K)
                noise = codec.StorageNoise.random(p, storage_rng)
                for pos, db_id in enumerate(holders):
                    databases[db_id].store[key].append(codec.encode_storage(plain, noise, p, pos))

    state = SystemState(N, mu, spec, plan, L_eff, layouts, params, databases, seed, np.random.default_rng(session_seq))
    limit = state.storage_limit()
    over = [c for c in state.storage_counts() if c > limit]
    if over:
        raise AssertionError(f"storage constraint violated: {over} > {limit}")
    return state


def measure(state: SystemState, transcripts) -> CostReport:
    """Empirical costs from transcripts against the plan's analytic costs."""
    transcripts = list(transcripts)
    down = sum(t.counted("answer") for t in transcripts)
    up = sum(t.counted("update") for t in transcripts)
    L_eff = state.L_effective
    per_part = []
    for lay, part in zip(state.layouts, state.plan.parts):
        pd = sum(t.counted("answer", lay.index) for t in transcripts)
        pu = sum(t.counted("update", lay.index) for t in transcripts)
        per_part.append({
            "r": lay.r, "K": lay.K, "x": lay.x, "y": lay.y,
            "fraction": str(part.fraction), "symbols": lay.length,
            "download": pd, "upload": pu,
        })
    plan = state.plan
    return CostReport(
        read=Fraction(down, L_eff),
        write=Fraction(up, L_eff),
        total=Fraction(down + up, L_eff),
        analytic_read=plan.read_cost,
        analytic_write=plan.write_cost,
        analytic_total=plan.predicted_cost,
        raw_total=Fraction(down + up, state.spec.L),
        per_part=per_part,
        L=state.spec.L,
        L_effective=L_eff,
    )


# -- snapshots --------------------------------------------------------------


def _rng_state(rng: np.random.Generator) -> dict:
    st = rng.bit_generator.state
    return json.loads(json.dumps(st, default=int))


def snapshot(state: SystemState) -> bytes:
    """Serialize databases, plan and RNG position; in-flight sessions are not kept."""
    meta = {
        "N": state.N,
        "mu": str(state.mu),
        "M": state.spec.M,
        "L": state.spec.L,
        "L_effective": state.L_effective,
        "seed": state.seed,
        "plan": state.plan.to_dict(),
        "params": {f"{k[0]}:{k[1]}": p.describe() for k, p in sorted(state.params.items())},
        "rng": _rng_state(state.session_rng),
    }
    meta_bytes = json.dumps(meta, sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<HQ", FORMAT_VERSION, state.spec.q))
    buf.write(struct.pack("<I", len(meta_bytes)))
    buf.write(meta_bytes)
    buf.write(struct.pack("<I", len(state.databases)))
    for db in state.databases:
        symbols = [int(v) for key in sorted(db.store) for sub in db.store[key] for v in sub.ravel()]
        buf.write(struct.pack("<Q", len(symbols)))
        buf.write(np.asarray(symbols, dtype="<u8").tobytes())
    body = buf.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


def restore(blob: bytes) -> SystemState:
    if len(blob) < 4 + 10 + 4 + 4 or blob[:4] != MAGIC:
        raise Corrupt("not a PRUW snapshot")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    version, q = struct.unpack_from("<HQ", body, 4)
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"snapshot format {version}, expected {FORMAT_VERSION}")
    if zlib.crc32(body) != crc:
        raise Corrupt("snapshot checksum mismatch (truncated or modified)")
    pos = 14
    try:
        (meta_len,) = struct.unpack_from("<I", body, pos)
        pos += 4
        meta = json.loads(body[pos: pos + meta_len])
        pos += meta_len
        (n_db,) = struct.unpack_from("<I", body, pos)
        pos += 4
        flat = []
        for _ in range(n_db):
            (count,) = struct.unpack_from("<Q", body, pos)
            pos += 8
            flat.append(np.frombuffer(body, dtype="<u8", count=count, offset=pos))
            pos += 8 * count
    except (struct.error, ValueError) as exc:
        raise Corrupt(f"malformed snapshot: {exc}") from exc
    if pos != len(body):
        raise Corrupt("trailing bytes in snapshot")

    spec = ModelSpec(meta["M"], meta["L"], q)
    F = PrimeField(q)
    plan = AllocationPlan.from_dict(meta["plan"])
    N = meta["N"]
    layouts, offset = [], 0
    for idx, part in enumerate(plan.parts):
        length = int(part.fraction * meta["L_effective"])
        layouts.append(PartLayout(idx, part.r, part.K, part.x, part.y, offset, length, N))
        offset += length
    params = {}
    for key, d in meta["params"].items():
        a, b = (int(v) for v in key.split(":"))
        params[(a, b)] = codec.SchemeParams(
            d["r"], d["K"], d["x"], d["y"], d["M"], F,
            tuple(d["alphas"]), tuple(tuple(row) for row in d["fs"]), tuple(d["null_dbs"]),
        )
    databases = [Database(n) for n in range(N)]
    for lay in layouts:
        for s in range(N):
            for db_id in lay.holders(s):
                databases[db_id].store[(lay.index, s)] = []
    for db, symbols in zip(databases, flat):
        cursor = 0
        for key in sorted(db.store):
            lay = layouts[key[0]]
            size = lay.y * spec.M
            for _ in range(lay.n_subpackets):
                chunk = symbols[cursor: cursor + size]
                if chunk.size != size:
                    raise Corrupt(f"database {db.id} store is short")
                db.store[key].append(F.array(chunk.astype(np.int64) if F.dtype is not object else chunk.astype(object)).reshape(lay.y, spec.M))
                cursor += size
        if cursor != symbols.size:
            raise Corrupt(f"database {db.id} store has extra symbols")
    rng = np.random.default_rng()
    rng.bit_generator.state = meta["rng"]
    return SystemState(N, Fraction(meta["mu"]), spec, plan, meta["L_effective"], layouts, params, databases,
                       meta["seed"], rng)
