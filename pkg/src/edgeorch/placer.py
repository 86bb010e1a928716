"""Placement solvers for application blocks over the site tree.

Feasibility covers per-site CPU, per-GPU memory/compute, per-link
bandwidth (both directions pooled), per-block source-latency bounds,
tier allow-lists and pins.  Among feasible placements the objective is
lexicographic: quality_loss, then traffic_cost, then migrations versus
the previous placement, then a deterministic block->site tiebreak key.

solve_exact is a branch-and-bound over site assignments, GPU slots and
knob levels, pruned on the partial-cost lower bound and on residual
capacity.  solve_greedy is a scalable non-optimal fallback with
parameter-level deepening and bounded evict-and-replace retries.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .appgraph import AppGraph, Block, effective_demand, quality_loss, source_latency_requirements
from .topology import Topology

EPS = 1e-9


class InfeasibleError(Exception):
    def __init__(self, message: str, violations: list[str] | None = None):
        super().__init__(message)
        self.violations = violations or []


class BudgetExceededError(Exception):
    pass


@dataclass(frozen=True)
class Violation:
    kind: str  # CpuOver | GpuMemOver | GpuComputeOver | BandwidthOver | LatencyOver | TierForbidden | PinBroken
    subject: str
    amount: float


@dataclass(frozen=True)
class Placement:
    # block id -> (site id, gpu id or None)
    assignment: dict[str, tuple[str, str | None]] = field(default_factory=dict)
    # (block id, knob name) -> level index
    levels: dict[tuple[str, str], int] = field(default_factory=dict)

    def site_of(self, block_id: str) -> str:
        return self.assignment[block_id][0]

    def levels_of(self, block: Block) -> tuple[int, ...]:
        return tuple(self.levels.get((block.id, k.name), 0) for k in block.params)

    def to_json_obj(self) -> dict:
        out: dict = {"assignment": {}, "levels": {}}
        for bid in sorted(self.assignment):
            site, gpu = self.assignment[bid]
            out["assignment"][bid] = {"site": site, "gpu": gpu}
        for (bid, knob) in sorted(self.levels):
            out["levels"].setdefault(bid, {})[knob] = self.levels[(bid, knob)]
        return out


@dataclass(frozen=True)
class PolicyCost:
    quality_loss: float
    traffic_cost: float
    migrations: int
    tiebreak: tuple = ()

    def key(self) -> tuple:
        return (self.quality_loss, self.traffic_cost, self.migrations, self.tiebreak)

    def to_json_obj(self) -> dict:
        return {
            "quality_loss": self.quality_loss,
            "traffic_cost": self.traffic_cost,
            "migrations": self.migrations,
        }


@dataclass(frozen=True)
class SolverOpts:
    solver: str = "exact"
    max_nodes: int = 10_000_000
    max_evictions: int = 8


@dataclass(frozen=True)
class Action:
    kind: str  # Deploy | Migrate | Remove | SetLevel | Reject
    block: str | None = None
    app: str | None = None
    site: str | None = None
    gpu: str | None = None
    from_site: str | None = None
    levels: tuple[tuple[str, int], ...] | None = None

    def to_json_obj(self) -> dict:
        out = {"kind": self.kind}
        for k in ("block", "app", "site", "gpu", "from_site"):
            v = getattr(self, k)
            if v is not None:
                out[k] = v
        if self.levels is not None:
            out["levels"] = {name: idx for name, idx in self.levels}
        return out


def _lex_less(a: tuple, b: tuple) -> bool:
    """Lexicographic (qloss, traffic, migrations, tiebreak) with EPS bands.

    The running sums accumulate floats in search order, so two placements
    with identical recomputed costs can differ by rounding noise here; a
    strict tuple compare would then pick the tiebreak arbitrarily.
    """
    for i in (0, 1):
        if a[i] < b[i] - EPS:
            return True
        if a[i] > b[i] + EPS:
            return False
    if a[2] != b[2]:
        return a[2] < b[2]
    return a[3] < b[3]


def _lex_partial_exceeds(partial: tuple, best: tuple) -> bool:
    """True when a partial (qloss, traffic, migrations) already exceeds best."""
    for i in (0, 1):
        if partial[i] > best[i] + EPS:
            return True
        if partial[i] < best[i] - EPS:
            return False
    return partial[2] > best[2]


def _sorted_apps(apps) -> list[AppGraph]:
    return sorted(apps, key=lambda a: a.id)


def _all_blocks(apps) -> dict[str, tuple[AppGraph, Block]]:
    out: dict[str, tuple[AppGraph, Block]] = {}
    for app in _sorted_apps(apps):
        for b in app.blocks:
            if b.id in out:
                raise ValueError(f"block id {b.id!r} appears in multiple admitted apps")
            out[b.id] = (app, b)
    return out


def check_feasible(topology: Topology, apps, placement: Placement) -> list[Violation]:
    """All constraint violations of a total placement (empty == feasible)."""
    blocks = _all_blocks(apps)
    for bid in blocks:
        if bid not in placement.assignment:
            raise ValueError(f"placement is not total: missing block {bid!r}")

    out: list[Violation] = []
    cpu_used: dict[str, float] = {}
    gpu_mem: dict[tuple[str, str], float] = {}
    gpu_comp: dict[tuple[str, str], float] = {}
    demands: dict[str, object] = {}

    for bid, (app, b) in sorted(blocks.items()):
        site_id, gpu_id = placement.assignment[bid]
        site = topology.site(site_id)
        d = effective_demand(b, placement.levels_of(b))
        demands[bid] = d
        if site.tier not in b.allowed_tiers:
            out.append(Violation("TierForbidden", f"{bid}@{site_id}", 0.0))
        if b.pinned_site is not None and site_id != b.pinned_site:
            out.append(Violation("PinBroken", bid, 0.0))
        cpu_used[site_id] = cpu_used.get(site_id, 0.0) + d.cpu
        if b.needs_gpu:
            if gpu_id is None:
                raise ValueError(f"block {bid!r} requires a GPU slot but has none")
            gpu = site.gpu(gpu_id)
            key = (site_id, gpu_id)
            gpu_mem[key] = gpu_mem.get(key, 0.0) + d.gpu_mem_gb
            gpu_comp[key] = gpu_comp.get(key, 0.0) + d.gpu_compute_pct
        elif gpu_id is not None:
            raise ValueError(f"block {bid!r} does not require a GPU but has slot {gpu_id!r}")

    for site_id in sorted(cpu_used):
        cap = topology.site(site_id).ai_cpu_capacity
        if cpu_used[site_id] > cap + EPS:
            out.append(Violation("CpuOver", site_id, cpu_used[site_id] - cap))
    for (site_id, gpu_id) in sorted(gpu_mem):
        gpu = topology.site(site_id).gpu(gpu_id)
        if gpu_mem[(site_id, gpu_id)] > gpu.mem_gb + EPS:
            out.append(Violation("GpuMemOver", f"{site_id}/{gpu_id}", gpu_mem[(site_id, gpu_id)] - gpu.mem_gb))
        if gpu_comp[(site_id, gpu_id)] > gpu.compute_pct + EPS:
            out.append(Violation("GpuComputeOver", f"{site_id}/{gpu_id}", gpu_comp[(site_id, gpu_id)] - gpu.compute_pct))

    link_load: dict[str, float] = {}
    link_caps: dict[str, float] = {}
    for app in _sorted_apps(apps):
        for e in app.edges:
            rate = e.rate_mbps * demands[e.src].rate_scale
            if rate <= 0:
                continue
            for link in topology.route(placement.site_of(e.src), placement.site_of(e.dst)):
                link_load[link.key] = link_load.get(link.key, 0.0) + rate
                link_caps[link.key] = link.bandwidth_mbps
    for key in sorted(link_load):
        if link_load[key] > link_caps[key] + EPS:
            out.append(Violation("BandwidthOver", key, link_load[key] - link_caps[key]))

    for app in _sorted_apps(apps):
        reqs = source_latency_requirements(app)
        for bid, sources in reqs.items():
            bound = app.block(bid).max_source_latency_ms
            here = placement.site_of(bid)
            for src in sources:
                lat = topology.path_latency_ms(placement.site_of(src), here)
                if lat > bound + EPS:
                    out.append(Violation("LatencyOver", f"{src}->{bid}", lat - bound))
    return out


def policy_cost(topology: Topology, apps, placement: Placement,
                prev: Placement | None = None) -> PolicyCost:
    """Lexicographic objective of a (feasible) placement."""
    blocks = _all_blocks(apps)
    qloss = 0.0
    scale: dict[str, float] = {}
    for bid, (app, b) in sorted(blocks.items()):
        levels = placement.levels_of(b)
        qloss += quality_loss(b, levels)
        scale[bid] = effective_demand(b, levels).rate_scale

    traffic = 0.0
    for app in _sorted_apps(apps):
        for e in app.edges:
            traffic += e.rate_mbps * scale[e.src] * topology.path_cost(
                placement.site_of(e.src), placement.site_of(e.dst))

    migrations = 0
    if prev is not None:
        for bid in sorted(blocks):
            if bid in prev.assignment and prev.site_of(bid) != placement.site_of(bid):
                migrations += 1

    tiebreak = tuple(
        (bid, placement.assignment[bid][0], placement.assignment[bid][1] or "",
         placement.levels_of(blocks[bid][1]))
        for bid in sorted(blocks)
    )
    return PolicyCost(qloss, traffic, migrations, tiebreak)


@dataclass
class _LevelCombo:
    levels: tuple[int, ...]
    qloss: float
    cpu: float
    gpu_mem: float
    gpu_comp: float
    rate_scale: float


class _Problem:
    """Shared precomputation for both solvers."""

    def __init__(self, topology: Topology, apps, prev: Placement | None):
        self.topology = topology
        self.apps = _sorted_apps(apps)
        self.prev = prev
        self.blocks_by_id = _all_blocks(apps)

        pinned: list[tuple[AppGraph, Block]] = []
        free: list[tuple[AppGraph, Block]] = []
        for bid, pair in self.blocks_by_id.items():
            (pinned if pair[1].pinned_site is not None else free).append(pair)
        pinned.sort(key=lambda p: p[1].id)
        free.sort(key=lambda p: (-p[1].gpu_mem_gb, -p[1].gpu_compute_pct, -p[1].cpu_req, p[1].id))
        self.order: list[tuple[AppGraph, Block]] = pinned + free
        self.index = {pair[1].id: i for i, pair in enumerate(self.order)}
        self.n = len(self.order)

        # Route caches keyed by site pair.
        self._routes: dict[tuple[str, str], tuple[list, float, float]] = {}

        # Latency requirements: block id -> list of (pinned source site, bound)
        self.lat_reqs: dict[str, list[tuple[str, float]]] = {}
        for app in self.apps:
            for bid, sources in source_latency_requirements(app).items():
                bound = app.block(bid).max_source_latency_ms
                self.lat_reqs[bid] = [(app.block(s).pinned_site, bound) for s in sources]

        site_ids = sorted(topology.sites)
        self.candidates: list[list[tuple[str, str | None]]] = []
        for app, b in self.order:
            cands: list[tuple[str, str | None]] = []
            sites = [b.pinned_site] if b.pinned_site is not None else site_ids
            for sid in sites:
                site = topology.site(sid)
                if site.tier not in b.allowed_tiers:
                    continue
                ok = all(
                    topology.path_latency_ms(src_site, sid) <= bound + EPS
                    for src_site, bound in self.lat_reqs.get(b.id, [])
                )
                if not ok:
                    continue
                if b.needs_gpu:
                    cands.extend((sid, g.id) for g in sorted(site.gpus, key=lambda g: g.id))
                else:
                    cands.append((sid, None))
            self.candidates.append(cands)

        self.combos: list[list[_LevelCombo]] = []
        for app, b in self.order:
            combos = []
            for idxs in itertools.product(*(range(len(k.levels)) for k in b.params)):
                d = effective_demand(b, idxs)
                combos.append(_LevelCombo(idxs, quality_loss(b, idxs),
                                          d.cpu, d.gpu_mem_gb, d.gpu_compute_pct, d.rate_scale))
            combos.sort(key=lambda c: (c.qloss, c.levels))
            self.combos.append(combos)

        # All edges incident to each block as (peer index, block_is_src, rate).
        # An edge's load is added by whichever endpoint is placed second.
        self.incident: list[list[tuple[int, bool, float]]] = [[] for _ in range(self.n)]
        for app in self.apps:
            for e in app.edges:
                i, j = self.index[e.src], self.index[e.dst]
                self.incident[i].append((j, True, e.rate_mbps))
                self.incident[j].append((i, False, e.rate_mbps))

        self.prev_site = {bid: prev.site_of(bid) for bid in prev.assignment} if prev else {}

    def route_info(self, a: str, b: str) -> tuple[list, float, float]:
        key = (a, b)
        info = self._routes.get(key)
        if info is None:
            links = self.topology.route(a, b)
            info = (links, sum(l.cost_weight for l in links), sum(l.latency_ms for l in links))
            self._routes[key] = info
        return info

    def min_fit_exists(self, i: int, cpu_used, gpu_mem, gpu_comp) -> bool:
        """True if block i fits somewhere on residual capacity alone."""
        app, b = self.order[i]
        combos = self.combos[i]
        for sid, gid in self.candidates[i]:
            site = self.topology.site(sid)
            cap = site.ai_cpu_capacity - cpu_used.get(sid, 0.0)
            for c in combos:
                if c.cpu > cap + EPS:
                    continue
                if gid is not None:
                    gpu = site.gpu(gid)
                    if c.gpu_mem > gpu.mem_gb - gpu_mem.get((sid, gid), 0.0) + EPS:
                        continue
                    if c.gpu_comp > gpu.compute_pct - gpu_comp.get((sid, gid), 0.0) + EPS:
                        continue
                return True
        return False


class _State:
    """Mutable partial assignment shared by the solvers."""

    def __init__(self, prob: _Problem):
        self.prob = prob
        self.site: list[str | None] = [None] * prob.n
        self.gpu: list[str | None] = [None] * prob.n
        self.combo: list[_LevelCombo | None] = [None] * prob.n
        self.cpu_used: dict[str, float] = {}
        self.gpu_mem: dict[tuple[str, str], float] = {}
        self.gpu_comp: dict[tuple[str, str], float] = {}
        self.bw_used: dict[str, float] = {}
        self.qloss = 0.0
        self.traffic = 0.0
        self.migrations = 0

    def try_place(self, i: int, sid: str, gid: str | None, combo: _LevelCombo):
        """Check capacity and apply; returns an undo token or None on misfit."""
        prob = self.prob
        site = prob.topology.site(sid)
        if self.cpu_used.get(sid, 0.0) + combo.cpu > site.ai_cpu_capacity + EPS:
            return None
        if gid is not None:
            gpu = site.gpu(gid)
            gkey = (sid, gid)
            if self.gpu_mem.get(gkey, 0.0) + combo.gpu_mem > gpu.mem_gb + EPS:
                return None
            if self.gpu_comp.get(gkey, 0.0) + combo.gpu_comp > gpu.compute_pct + EPS:
                return None

        bw_delta: dict[str, float] = {}
        traffic_delta = 0.0
        for peer, i_is_src, base_rate in prob.incident[i]:
            if self.site[peer] is None:
                continue  # edge accounted when the peer is placed
            scale = combo.rate_scale if i_is_src else self.combo[peer].rate_scale
            rate = base_rate * scale
            if rate <= 0:
                continue
            a, b = (sid, self.site[peer]) if i_is_src else (self.site[peer], sid)
            links, cost, _lat = prob.route_info(a, b)
            traffic_delta += rate * cost
            for link in links:
                bw_delta[link.key] = bw_delta.get(link.key, 0.0) + rate
        for key, add in bw_delta.items():
            link_cap = next(l.bandwidth_mbps for l in prob.topology.links if l.key == key)
            if self.bw_used.get(key, 0.0) + add > link_cap + EPS:
                return None

        bid = prob.order[i][1].id
        migr = 1 if prob.prev_site.get(bid, sid) != sid else 0

        self.site[i] = sid
        self.gpu[i] = gid
        self.combo[i] = combo
        self.cpu_used[sid] = self.cpu_used.get(sid, 0.0) + combo.cpu
        if gid is not None:
            gkey = (sid, gid)
            self.gpu_mem[gkey] = self.gpu_mem.get(gkey, 0.0) + combo.gpu_mem
            self.gpu_comp[gkey] = self.gpu_comp.get(gkey, 0.0) + combo.gpu_comp
        for key, add in bw_delta.items():
            self.bw_used[key] = self.bw_used.get(key, 0.0) + add
        self.qloss += combo.qloss
        self.traffic += traffic_delta
        self.migrations += migr
        return (i, sid, gid, combo, bw_delta, traffic_delta, migr)

    def undo(self, token):
        i, sid, gid, combo, bw_delta, traffic_delta, migr = token
        self.site[i] = None
        self.gpu[i] = None
        self.combo[i] = None
        self.cpu_used[sid] -= combo.cpu
        if gid is not None:
            gkey = (sid, gid)
            self.gpu_mem[gkey] -= combo.gpu_mem
            self.gpu_comp[gkey] -= combo.gpu_comp
        for key, add in bw_delta.items():
            self.bw_used[key] -= add
        self.qloss -= combo.qloss
        self.traffic -= traffic_delta
        self.migrations -= migr

    def to_placement(self) -> Placement:
        assignment: dict[str, tuple[str, str | None]] = {}
        levels: dict[tuple[str, str], int] = {}
        for i, (app, b) in enumerate(self.prob.order):
            assignment[b.id] = (self.site[i], self.gpu[i])
            for knob, idx in zip(b.params, self.combo[i].levels):
                levels[(b.id, knob.name)] = idx
        return Placement(assignment=assignment, levels=levels)

    def tiebreak(self) -> tuple:
        prob = self.prob
        return tuple(
            (bid, self.site[prob.index[bid]], self.gpu[prob.index[bid]] or "",
             self.combo[prob.index[bid]].levels)
            for bid in sorted(prob.index)
        )


def solve_exact(topology: Topology, apps, prev: Placement | None = None,
                opts: SolverOpts | None = None) -> Placement:
    """Lexicographically optimal placement via branch-and-bound.

    Raises InfeasibleError when no assignment satisfies the constraints
    at any knob level, BudgetExceededError past opts.max_nodes explored
    nodes.  Deterministic: identical inputs yield identical placements.
    """
    opts = opts or SolverOpts()
    prob = _Problem(topology, apps, prev)
    if prob.n == 0:
        return Placement()

    state = _State(prob)
    best: dict = {"key": None, "placement": None}
    nodes = 0

    def dfs(depth: int):
        nonlocal nodes
        if depth == prob.n:
            key = (state.qloss, state.traffic, state.migrations, state.tiebreak())
            if best["key"] is None or _lex_less(key, best["key"]):
                best["key"] = key
                best["placement"] = state.to_placement()
            return
        if best["key"] is not None:
            # Partial cost is a lower bound (remaining qloss/traffic >= 0).
            if _lex_partial_exceeds((state.qloss, state.traffic, state.migrations),
                                    best["key"][:3]):
                return
        for j in range(depth, prob.n):
            if not prob.min_fit_exists(j, state.cpu_used, state.gpu_mem, state.gpu_comp):
                return
        for sid, gid in prob.candidates[depth]:
            for combo in prob.combos[depth]:
                nodes += 1
                if nodes > opts.max_nodes:
                    raise BudgetExceededError(f"explored more than {opts.max_nodes} nodes")
                token = state.try_place(depth, sid, gid, combo)
                if token is None:
                    continue
                dfs(depth + 1)
                state.undo(token)

    dfs(0)
    if best["placement"] is None:
        raise InfeasibleError("no feasible placement exists",
                              violations=infeasibility_report(topology, apps))
    return best["placement"]


def adapt_params(topology: Topology, apps, prev: Placement | None = None,
                 opts: SolverOpts | None = None) -> Placement:
    """Entry point when full-quality placement is infeasible.

    Knob levels are already part of solve_exact's search space, so this
    is the same search; the name documents the intent at call sites.
    """
    return solve_exact(topology, apps, prev, opts)


def infeasibility_report(topology: Topology, apps) -> list[str]:
    """Human-readable reasons why no placement can exist (best effort)."""
    out: list[str] = []
    try:
        prob = _Problem(topology, apps, None)
    except ValueError as exc:
        return [str(exc)]
    for i, (app, b) in enumerate(prob.order):
        if not prob.candidates[i]:
            out.append(f"block {b.id}: no site satisfies tier/latency/pin constraints")
            continue
        if not prob.min_fit_exists(i, {}, {}, {}):
            out.append(f"block {b.id}: demand exceeds every candidate site's capacity "
                       f"even at the deepest parameter levels")
    if not out:
        out.append("no joint assignment satisfies all constraints")
    return out


def solve_greedy(topology: Topology, apps, prev: Placement | None = None,
                 opts: SolverOpts | None = None) -> Placement:
    """Feasible (not necessarily optimal) placement by greedy assignment.

    Blocks are taken in descending demand-dominance order and put on the
    feasible site with the lowest incremental cost, deepening knob levels
    when the full-quality demand does not fit.  When a block cannot be
    placed at all, up to opts.max_evictions already-placed blocks are
    relocated to make room.
    """
    opts = opts or SolverOpts()
    prob = _Problem(topology, apps, prev)
    if prob.n == 0:
        return Placement()

    state = _State(prob)
    evictions = 0

    def best_option(i: int, forbid_site: str | None = None):
        """Cheapest feasible (site, gpu, combo) for block i, or None."""
        best_key = None
        best_opt = None
        for sid, gid in prob.candidates[i]:
            if sid == forbid_site:
                continue
            for combo in prob.combos[i]:
                token = state.try_place(i, sid, gid, combo)
                if token is None:
                    continue
                bid = prob.order[i][1].id
                migr = 1 if prob.prev_site.get(bid, sid) != sid else 0
                key = (combo.qloss, token[5], migr, sid, gid or "", combo.levels)
                state.undo(token)
                if best_key is None or key < best_key:
                    best_key, best_opt = key, (sid, gid, combo)
        return best_opt

    def place_or_evict(i: int) -> bool:
        nonlocal evictions
        opt = best_option(i)
        if opt is not None:
            state.try_place(i, *opt)
            return True
        # Evict-and-replace: move one already-placed block off a candidate
        # site, retry, and re-place the victim elsewhere.
        for cand_site in sorted({sid for sid, _ in prob.candidates[i]}):
            victims = [j for j in range(prob.n)
                       if state.site[j] == cand_site and prob.order[j][1].pinned_site is None]
            for j in sorted(victims, key=lambda j: prob.order[j][1].id):
                if evictions >= opts.max_evictions:
                    return False
                saved = _remove_block(state, j)
                opt_i = best_option(i)
                if opt_i is not None:
                    state.try_place(i, *opt_i)
                    opt_j = best_option(j)
                    if opt_j is not None:
                        state.try_place(j, *opt_j)
                        evictions += 1
                        return True
                    # could not re-place the victim; roll back
                    _remove_block(state, i)
                _restore_block(state, j, saved)
        return False

    for i in range(prob.n):
        if not place_or_evict(i):
            raise InfeasibleError(
                f"greedy could not place block {prob.order[i][1].id!r}",
                violations=infeasibility_report(topology, apps))

    placement = state.to_placement()
    leftover = check_feasible(topology, apps, placement)
    if leftover:
        raise InfeasibleError("greedy produced an infeasible placement",
                              violations=[f"{v.kind}:{v.subject}" for v in leftover])
    return placement


def _remove_block(state: _State, i: int):
    """Detach block i from the partial state, returning what is needed to restore it."""
    prob = state.prob
    sid, gid, combo = state.site[i], state.gpu[i], state.combo[i]
    # Recompute the edge contributions that were added for i.
    bw_delta: dict[str, float] = {}
    traffic_delta = 0.0
    for peer, i_is_src, base_rate in prob.incident[i]:
        if state.site[peer] is None:
            continue
        scale = combo.rate_scale if i_is_src else state.combo[peer].rate_scale
        rate = base_rate * scale
        if rate <= 0:
            continue
        a, b = (sid, state.site[peer]) if i_is_src else (state.site[peer], sid)
        links, cost, _lat = prob.route_info(a, b)
        traffic_delta += rate * cost
        for link in links:
            bw_delta[link.key] = bw_delta.get(link.key, 0.0) + rate
    bid = prob.order[i][1].id
    migr = 1 if prob.prev_site.get(bid, sid) != sid else 0

    state.site[i] = None
    state.gpu[i] = None
    state.combo[i] = None
    state.cpu_used[sid] -= combo.cpu
    if gid is not None:
        gkey = (sid, gid)
        state.gpu_mem[gkey] -= combo.gpu_mem
        state.gpu_comp[gkey] -= combo.gpu_comp
    for key, add in bw_delta.items():
        state.bw_used[key] -= add
    state.qloss -= combo.qloss
    state.traffic -= traffic_delta
    state.migrations -= migr
    return (sid, gid, combo, bw_delta, traffic_delta, migr)


def _restore_block(state: _State, i: int, saved):
    sid, gid, combo, bw_delta, traffic_delta, migr = saved
    state.site[i] = sid
    state.gpu[i] = gid
    state.combo[i] = combo
    state.cpu_used[sid] = state.cpu_used.get(sid, 0.0) + combo.cpu
    if gid is not None:
        gkey = (sid, gid)
        state.gpu_mem[gkey] = state.gpu_mem.get(gkey, 0.0) + combo.gpu_mem
        state.gpu_comp[gkey] = state.gpu_comp.get(gkey, 0.0) + combo.gpu_comp
    for key, add in bw_delta.items():
        state.bw_used[key] = state.bw_used.get(key, 0.0) + add
    state.qloss += combo.qloss
    state.traffic += traffic_delta
    state.migrations += migr


def solve(topology: Topology, apps, prev: Placement | None = None,
          opts: SolverOpts | None = None) -> Placement:
    """Dispatch to the solver named by opts.solver."""
    opts = opts or SolverOpts()
    if opts.solver == "greedy":
        return solve_greedy(topology, apps, prev, opts)
    if opts.solver == "exact":
        return solve_exact(topology, apps, prev, opts)
    raise ValueError(f"unknown solver {opts.solver!r}")


def plan_actions(prev: Placement | None, nxt: Placement) -> list[Action]:
    """Deterministic action list transforming prev into nxt.

    Removes come first so freed resources are available before Deploys.
    """
    prev = prev or Placement()

    def block_levels(p: Placement, bid: str) -> tuple[tuple[str, int], ...]:
        return tuple(sorted((knob, idx) for (b, knob), idx in p.levels.items() if b == bid))

    removes, migrates, deploys, setlevels = [], [], [], []
    for bid in sorted(prev.assignment):
        if bid not in nxt.assignment:
            removes.append(Action("Remove", block=bid, from_site=prev.site_of(bid)))
    for bid in sorted(nxt.assignment):
        site, gpu = nxt.assignment[bid]
        lv = block_levels(nxt, bid)
        if bid not in prev.assignment:
            deploys.append(Action("Deploy", block=bid, site=site, gpu=gpu, levels=lv))
        elif prev.assignment[bid] != (site, gpu):
            migrates.append(Action("Migrate", block=bid, site=site, gpu=gpu,
                                   from_site=prev.site_of(bid), levels=lv))
        elif block_levels(prev, bid) != lv:
            setlevels.append(Action("SetLevel", block=bid, site=site, levels=lv))
    return removes + migrates + deploys + setlevels
