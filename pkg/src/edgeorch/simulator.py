"""Discrete-event loop replaying scenario timelines through the placer.

Each event (app arrival/departure, capacity delta) triggers a re-solve
with the current placement as the migration baseline.  The orchestrator
never commits an infeasible placement: an unsatisfiable arrival (or a
capacity shrink that would strand the admitted apps) is rejected and the
prior state kept.  Data traffic is accounted analytically from rates and
routes; virtual time only orders events.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .appgraph import AppGraph, effective_demand
from .placer import (Action, InfeasibleError, Placement, SolverOpts, check_feasible,
                     plan_actions, policy_cost, solve)
from .topology import Topology, build_topology


class UnknownApp(KeyError):
    pass


@dataclass(frozen=True)
class Event:
    at: float
    kind: str  # arrival | departure | capacity_delta
    app: str | None = None
    site: str | None = None
    resource: str | None = None
    amount: float | None = None
    seq: int = 0

    @property
    def label(self) -> str:
        if self.kind in ("arrival", "departure"):
            return f"{self.kind}:{self.app}"
        return f"{self.kind}:{self.site}"


@dataclass(frozen=True)
class MetricsSnapshot:
    cpu_used: dict[str, float]
    cpu_capacity: dict[str, float]
    gpu_mem_used: dict[str, float]       # "site/gpu" -> GB
    gpu_mem_capacity: dict[str, float]
    gpu_compute_used: dict[str, float]   # "site/gpu" -> percent
    gpu_compute_capacity: dict[str, float]
    link_traffic_mbps: dict[str, float]  # "child-parent" -> Mbps
    link_bandwidth_mbps: dict[str, float]
    migrations_total: int
    quality_loss: float
    traffic_cost: float


@dataclass(frozen=True)
class SimState:
    topology: Topology
    catalog: dict[str, AppGraph]
    admitted: dict[str, AppGraph] = field(default_factory=dict)
    placement: Placement = field(default_factory=Placement)
    migrations_total: int = 0
    time: float = 0.0


@dataclass(frozen=True)
class SimStep:
    time: float
    event: str
    actions: tuple[Action, ...]
    violations: tuple
    metrics: MetricsSnapshot
    placement: Placement


@dataclass(frozen=True)
class SimTrace:
    steps: tuple[SimStep, ...]


def snapshot(state: SimState) -> MetricsSnapshot:
    """Metrics recomputed from scratch for the current placement."""
    t = state.topology
    cpu_used = {sid: 0.0 for sid in sorted(t.sites)}
    cpu_cap = {sid: t.sites[sid].ai_cpu_capacity for sid in sorted(t.sites)}
    gpu_mem_used, gpu_mem_cap, gpu_comp_used, gpu_comp_cap = {}, {}, {}, {}
    for sid in sorted(t.sites):
        for g in sorted(t.sites[sid].gpus, key=lambda g: g.id):
            key = f"{sid}/{g.id}"
            gpu_mem_used[key] = 0.0
            gpu_mem_cap[key] = g.mem_gb
            gpu_comp_used[key] = 0.0
            gpu_comp_cap[key] = g.compute_pct
    link_traffic = {l.key: 0.0 for l in t.links}
    link_bw = {l.key: l.bandwidth_mbps for l in t.links}

    scale: dict[str, float] = {}
    for app_id in sorted(state.admitted):
        app = state.admitted[app_id]
        for b in app.blocks:
            site_id, gpu_id = state.placement.assignment[b.id]
            d = effective_demand(b, state.placement.levels_of(b))
            scale[b.id] = d.rate_scale
            cpu_used[site_id] += d.cpu
            if gpu_id is not None:
                key = f"{site_id}/{gpu_id}"
                gpu_mem_used[key] += d.gpu_mem_gb
                gpu_comp_used[key] += d.gpu_compute_pct
    for app_id in sorted(state.admitted):
        app = state.admitted[app_id]
        for e in app.edges:
            rate = e.rate_mbps * scale[e.src]
            for link in t.route(state.placement.site_of(e.src), state.placement.site_of(e.dst)):
                link_traffic[link.key] += rate

    cost = policy_cost(t, state.admitted.values(), state.placement)
    return MetricsSnapshot(
        cpu_used=cpu_used, cpu_capacity=cpu_cap,
        gpu_mem_used=gpu_mem_used, gpu_mem_capacity=gpu_mem_cap,
        gpu_compute_used=gpu_comp_used, gpu_compute_capacity=gpu_comp_cap,
        link_traffic_mbps=link_traffic, link_bandwidth_mbps=link_bw,
        migrations_total=state.migrations_total,
        quality_loss=cost.quality_loss, traffic_cost=cost.traffic_cost,
    )


def apply_capacity_delta(topology: Topology, site_id: str, resource: str,
                         amount: float) -> Topology:
    site = topology.site(site_id)
    if resource != "cpu_cores":
        raise ValueError(f"unsupported capacity resource {resource!r}")
    new_site = replace(site, cpu_cores=site.cpu_cores + amount)
    sites = [new_site if s.id == site_id else s for s in topology.sites.values()]
    return build_topology(sites, list(topology.links))


def step(state: SimState, event: Event,
         opts: SolverOpts | None = None) -> tuple[SimState, list[Action], MetricsSnapshot]:
    """Apply one event: re-solve, derive actions, recompute metrics."""
    if event.at < state.time:
        raise ValueError(f"event at {event.at} precedes current time {state.time}")
    opts = opts or SolverOpts()

    topology = state.topology
    admitted = dict(state.admitted)
    if event.kind == "arrival":
        if event.app not in state.catalog:
            raise UnknownApp(event.app)
        if event.app in admitted:
            raise ValueError(f"app {event.app!r} is already admitted")
        admitted[event.app] = state.catalog[event.app]
    elif event.kind == "departure":
        if event.app not in admitted:
            raise UnknownApp(event.app)
        del admitted[event.app]
    elif event.kind == "capacity_delta":
        topology = apply_capacity_delta(topology, event.site, event.resource, event.amount)
    else:
        raise ValueError(f"unknown event kind {event.kind!r}")

    try:
        placement = solve(topology, admitted.values(), prev=state.placement, opts=opts)
    except InfeasibleError:
        # Reject the change; prior placement stays committed.
        new_state = replace(state, time=event.at)
        actions = [Action("Reject", app=event.app, site=event.site)]
        return new_state, actions, snapshot(new_state)

    cost = policy_cost(topology, admitted.values(), placement, prev=state.placement)
    actions = plan_actions(state.placement, placement)
    new_state = SimState(
        topology=topology,
        catalog=state.catalog,
        admitted=admitted,
        placement=placement,
        migrations_total=state.migrations_total + cost.migrations,
        time=event.at,
    )
    return new_state, actions, snapshot(new_state)


def run(topology: Topology, catalog: dict[str, AppGraph], events: list[Event],
        opts: SolverOpts | None = None) -> SimTrace:
    """Fold step over the events in (time, sequence) order."""
    state = SimState(topology=topology, catalog=dict(catalog))
    steps = [SimStep(time=0.0, event="initial", actions=(), violations=(),
                     metrics=snapshot(state), placement=state.placement)]
    for ev in sorted(events, key=lambda e: (e.at, e.seq)):
        state, actions, metrics = step(state, ev, opts=opts)
        violations = tuple(check_feasible(state.topology, state.admitted.values(),
                                          state.placement))
        steps.append(SimStep(time=ev.at, event=ev.label, actions=tuple(actions),
                             violations=violations, metrics=metrics,
                             placement=state.placement))
    return SimTrace(steps=tuple(steps))
