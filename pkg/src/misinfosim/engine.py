"""Agent-based diffusion engine.

A population of Humans and three bot types exchanges good/bad information
pieces over a static network. Each tick runs four stages in order:
generation, consumption, propagation, state update, followed by
bookkeeping. Humans flip between the Good and Bad state when the amount of
opposite-valence information they have consumed since their last flip
crosses a threshold.

Message state is held as integer counts per (directed edge, valence): a
piece's future depends only on its valence, its current holder, and the
immediate sender, so piece identity never needs to be materialized. This is
what keeps full sweeps tractable on one core.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ParameterError, StateError
from .network import Network, SmallWorldSpec, generate_erdos_renyi, generate_small_world

GOOD = 0
BAD = 1

# Saturation cap for fanout relays, which otherwise grow message counts
# exponentially and overflow int64 within ~25 ticks at default parameters.
_COUNT_CAP = 1 << 40


class AgentRole(enum.IntEnum):
    HUMAN = 0
    BAD_BOT = 1
    GOOD_BOT = 2
    INFO_CORRECTION_BOT = 3


class DefenderBasis(str, enum.Enum):
    """Population that the alpha2/alpha3 ratios multiply."""

    BAD_BOTS = "bad_bots"
    HUMANS = "humans"


def round_half_away(x: float) -> int:
    """Round a nonnegative value half away from zero (2.5 -> 3)."""
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class SimParams:
    """Full parameterization of one simulation run.

    alpha1 sizes the Bad Bot cohort as a ratio of the Human count; alpha2
    (info-correction bots) and alpha3 (good bots) are ratios of either the
    Bad Bot count or the Human count depending on ``defender_basis``.

    ``relay_mode`` selects the propagation semantics: ``"single"`` relays
    each kept piece with probability p_p to one uniformly chosen alter,
    ``"fanout"`` offers each kept piece to every alter independently with
    probability p_p (exponential message growth; kept for sensitivity
    checks). ``flip_rule`` is ``"gross"`` (opposite-valence counter crosses
    threshold_t) or ``"net"`` (difference of the counters crosses it).
    """

    n_h: int = 1000
    alpha1: float = 0.0
    alpha2: float = 0.0
    alpha3: float = 0.0
    defender_basis: DefenderBasis = DefenderBasis.BAD_BOTS
    p_g: float = 0.4
    p_c: float = 0.8
    p_p: float = 0.8
    threshold_t: int = 72
    max_ticks: int = 100
    net_k: int = 10
    net_beta: float = 0.05
    graph_kind: str = "ws"
    relay_mode: str = "single"
    flip_rule: str = "gross"
    exclude_sender: bool = True
    seed: int = 0

    def validate(self) -> None:
        if self.n_h < 1:
            raise ParameterError(f"n_h must be >= 1, got {self.n_h}")
        for name in ("p_g", "p_c", "p_p"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ParameterError(f"{name} must be in [0, 1], got {v}")
        for name in ("alpha1", "alpha2", "alpha3"):
            v = getattr(self, name)
            if v < 0:
                raise ParameterError(f"{name} must be >= 0, got {v}")
        if self.threshold_t < 1:
            raise ParameterError(f"threshold_t must be >= 1, got {self.threshold_t}")
        if self.max_ticks < 1:
            raise ParameterError(f"max_ticks must be >= 1, got {self.max_ticks}")
        if self.relay_mode not in ("single", "fanout"):
            raise ParameterError(f"relay_mode must be 'single' or 'fanout', got {self.relay_mode!r}")
        if self.flip_rule not in ("gross", "net"):
            raise ParameterError(f"flip_rule must be 'gross' or 'net', got {self.flip_rule!r}")
        if self.graph_kind not in ("ws", "er"):
            raise ParameterError(f"graph_kind must be 'ws' or 'er', got {self.graph_kind!r}")
        DefenderBasis(self.defender_basis)  # raises ValueError on bad input

    def bot_counts(self) -> tuple[int, int, int]:
        """(bad, info_correction, good) cohort sizes implied by the ratios."""
        n_bad = round_half_away(self.alpha1 * self.n_h)
        basis = n_bad if DefenderBasis(self.defender_basis) is DefenderBasis.BAD_BOTS else self.n_h
        n_ic = round_half_away(self.alpha2 * basis)
        n_good = round_half_away(self.alpha3 * basis)
        return n_bad, n_ic, n_good

    def total_agents(self) -> int:
        n_bad, n_ic, n_good = self.bot_counts()
        return self.n_h + n_bad + n_ic + n_good


@dataclass
class TickStats:
    """Per-tick aggregate counters (also the determinism fingerprint)."""

    tick: int
    good_humans: int
    bad_humans: int
    good_generated: int
    bad_generated: int
    good_consumed: int
    bad_consumed: int
    good_relayed: int
    bad_relayed: int


@dataclass
class RunOutcome:
    """Terminal measurements of one run.

    ``bad_majority_tick``: first tick where Bad Humans strictly outnumber
    Good Humans; ``all_bad_tick``: first tick where every Human is Bad.
    Either is None when the event never occurred before the tick cap.
    """

    bad_majority_tick: Optional[int]
    all_bad_tick: Optional[int]
    ticks_run: int
    final_good_humans: int
    final_bad_humans: int


class SimState:
    """Mutable state of a single run. Use the module-level functions
    ``init_simulation`` / ``step`` / ``run_to_completion`` to drive it."""

    def __init__(self, params: SimParams, net: Network, roles: np.ndarray,
                 rng: np.random.Generator):
        self.params = params
        self.net = net
        self.roles = roles
        self.rng = rng
        n = net.node_count
        self.state = np.zeros(n, dtype=np.int8)  # humans start Good; bots unused
        self.counters = np.zeros((n, 2), dtype=np.int64)  # consumed since flip
        e = int(net.indptr[-1])
        self.inbox_prev = np.zeros((e, 2), dtype=np.int64)
        self.inbox_curr = np.zeros((e, 2), dtype=np.int64)
        self.tick = 0
        self.bad_majority_tick: Optional[int] = None
        self.all_bad_tick: Optional[int] = None
        self.terminated = False
        self.debug = False
        self.last_relay_by_role: dict = {}

        # Precomputed edge geometry. Inbox row p belongs to receiver
        # edge_receiver[p] and carries pieces whose immediate sender is
        # net.indices[p]; recip[p] is the row of the mirrored edge.
        self.degrees = net.degrees.astype(np.int64)
        self.edge_receiver = np.repeat(np.arange(n, dtype=np.int64), self.degrees)
        self.pos_rank = np.arange(e, dtype=np.int64) - net.indptr[self.edge_receiver]
        keys = self.edge_receiver * n + net.indices
        self.recip = np.searchsorted(keys, net.indices * n + self.edge_receiver)

        self.human_mask = roles == AgentRole.HUMAN
        self.human_ids = np.flatnonzero(self.human_mask)
        self._role_of_edge = roles[self.edge_receiver]
        self._fan_src = None
        self._fan_dst = None
        if params.relay_mode == "fanout":
            self._build_fanout_pairs()

    def _build_fanout_pairs(self) -> None:
        """Expand (inbox row, other-alter) pairs for the fanout relay."""
        deg = self.degrees[self.edge_receiver]
        if self.params.exclude_sender:
            reps = np.maximum(deg - 1, 0)
        else:
            reps = deg
        src = np.repeat(np.arange(self.inbox_prev.shape[0], dtype=np.int64), reps)
        # rank of the delivery slot within the relayer's neighbor list
        offsets = np.concatenate(([0], np.cumsum(reps)))
        r = np.arange(src.size, dtype=np.int64) - offsets[src]
        if self.params.exclude_sender:
            r += r >= self.pos_rank[src]
        row = self.net.indptr[self.edge_receiver[src]] + r
        self._fan_src = src
        self._fan_dst = self.recip[row]

    # -- outcome helpers -------------------------------------------------

    def human_state_counts(self) -> tuple[int, int]:
        bad = int(np.count_nonzero(self.state[self.human_ids] == BAD))
        return self.params.n_h - bad, bad

    def outcome(self) -> RunOutcome:
        good, bad = self.human_state_counts()
        return RunOutcome(
            bad_majority_tick=self.bad_majority_tick,
            all_bad_tick=self.all_bad_tick,
            ticks_run=self.tick,
            final_good_humans=good,
            final_bad_humans=bad,
        )


def init_simulation(params: SimParams, network: Optional[Network] = None) -> SimState:
    """Build the network, place agents, and return a tick-0 state.

    Role layout: total node ids are shuffled uniformly and assigned in the
    order Humans, Bad Bots, Info-Correction Bots, Good Bots. All Humans start
    in the Good state with zeroed counters. The RNG stream (PCG64 seeded from
    ``params.seed``) is consumed by the graph first, then the shuffle, then
    the run itself. Passing ``network`` skips graph generation (test seam;
    the node count must match the implied total).
    """
    params.validate()
    n_bad, n_ic, n_good = params.bot_counts()
    total = params.n_h + n_bad + n_ic + n_good
    if total < 2:
        raise ParameterError(f"need at least 2 agents, got {total}")
    rng = np.random.Generator(np.random.PCG64(params.seed))
    if network is None:
        if params.graph_kind == "er":
            network = generate_erdos_renyi(total, params.net_beta, rng)
        else:
            network = generate_small_world(
                SmallWorldSpec(n=total, k=params.net_k, beta=params.net_beta), rng)
    elif network.node_count != total:
        raise ParameterError(
            f"injected network has {network.node_count} nodes, expected {total}")

    roles = np.empty(total, dtype=np.int8)
    perm = rng.permutation(total)
    splits = np.cumsum([params.n_h, n_bad, n_ic])
    roles[perm[:splits[0]]] = AgentRole.HUMAN
    roles[perm[splits[0]:splits[1]]] = AgentRole.BAD_BOT
    roles[perm[splits[1]:splits[2]]] = AgentRole.INFO_CORRECTION_BOT
    roles[perm[splits[2]:]] = AgentRole.GOOD_BOT
    return SimState(params, network, roles, rng)


def _stage_generation(state: SimState) -> tuple[int, int]:
    p = state.params
    roles = state.roles
    n = roles.size
    draws = state.rng.random(n) < p.p_g  # every agent draws once
    pieces = np.zeros((n, 2), dtype=np.int64)
    human_hit = draws & (roles == AgentRole.HUMAN)
    pieces[human_hit, GOOD] = state.state[human_hit] == GOOD
    pieces[human_hit, BAD] = state.state[human_hit] == BAD
    pieces[draws & (roles == AgentRole.BAD_BOT), BAD] = 2
    pieces[draws & (roles == AgentRole.GOOD_BOT), GOOD] = 2
    # info-correction bots draw but emit nothing
    if state.net.indices.size:
        state.inbox_curr += pieces[state.net.indices]
    return int(pieces[:, GOOD].sum()), int(pieces[:, BAD].sum())


def _receiver_totals(state: SimState) -> np.ndarray:
    """Sum inbox_prev rows per receiving agent, shape (agents, 2)."""
    n = state.roles.size
    indptr = state.net.indptr
    if state.degrees.min() > 0:
        # CSR rows are contiguous, so a segmented reduction does it
        totals = np.empty((n, 2), dtype=np.int64)
        totals[:, GOOD] = np.add.reduceat(state.inbox_prev[:, GOOD], indptr[:-1])
        totals[:, BAD] = np.add.reduceat(state.inbox_prev[:, BAD], indptr[:-1])
    else:
        totals = np.zeros((n, 2), dtype=np.int64)
        np.add.at(totals, state.edge_receiver, state.inbox_prev)
    return totals


def _stage_consumption(state: SimState) -> tuple[int, int]:
    p = state.params
    e = state.inbox_prev.shape[0]
    if e == 0:
        return 0, 0
    totals = _receiver_totals(state)
    hg = totals[state.human_ids, GOOD]
    hb = totals[state.human_ids, BAD]
    got_g = state.rng.binomial(hg, p.p_c)
    got_b = state.rng.binomial(hb, p.p_c)
    state.counters[state.human_ids, GOOD] += got_g
    state.counters[state.human_ids, BAD] += got_b
    return int(got_g.sum()), int(got_b.sum())


def _filter_for_relay(state: SimState) -> np.ndarray:
    """Role-dependent selection of inbox_prev for propagation.

    Good Humans keep everything as-is; Bad Humans keep only bad pieces;
    Good Bots keep only good pieces; Info-Correction Bots rewrite bad
    pieces to good and keep everything; Bad Bots rewrite good pieces to
    bad and keep everything.
    """
    role = state._role_of_edge
    ego_state = state.state[state.edge_receiver]
    g = state.inbox_prev[:, GOOD]
    b = state.inbox_prev[:, BAD]
    kept = np.empty_like(state.inbox_prev)
    is_human = role == AgentRole.HUMAN
    good_human = is_human & (ego_state == GOOD)
    bad_human = is_human & (ego_state == BAD)
    ic = role == AgentRole.INFO_CORRECTION_BOT
    good_bot = role == AgentRole.GOOD_BOT
    bad_bot = role == AgentRole.BAD_BOT
    kept[:, GOOD] = np.select(
        [good_human, good_bot, ic], [g, g, g + b], default=0)
    kept[:, BAD] = np.select(
        [good_human, bad_human, bad_bot], [b, b, g + b], default=0)
    return kept


def _relay_single(state: SimState, kept: np.ndarray) -> tuple[int, int]:
    """Each kept piece is relayed with probability p_p to one uniformly
    chosen alter of the relayer (excluding the immediate sender unless
    configured otherwise)."""
    p = state.params
    delivered = [0, 0]
    for val in (GOOD, BAD):
        sent = state.rng.binomial(kept[:, val], p.p_p)
        nz = np.flatnonzero(sent)
        if nz.size == 0:
            continue
        rep = np.repeat(nz, sent[nz])
        recv = state.edge_receiver[rep]
        deg = state.degrees[recv]
        avail = deg - 1 if p.exclude_sender else deg
        draws = state.rng.random(rep.size)
        ok = avail > 0
        r = (draws * avail).astype(np.int64)
        if p.exclude_sender:
            r += r >= state.pos_rank[rep]
        row = state.net.indptr[recv] + np.minimum(r, deg - 1)
        arrivals = state.recip[row[ok]]
        if arrivals.size:
            state.inbox_curr[:, val] += np.bincount(
                arrivals, minlength=state.inbox_curr.shape[0])
        delivered[val] = int(ok.sum())
    return delivered[GOOD], delivered[BAD]


def _relay_fanout(state: SimState, kept: np.ndarray) -> tuple[int, int]:
    """Literal fanout: each kept piece is offered to every alter except the
    immediate sender, independently with probability p_p. Counts saturate at
    a fixed cap to avoid integer overflow once growth is exponential."""
    p = state.params
    delivered = [0, 0]
    src, dst = state._fan_src, state._fan_dst
    if src is None or src.size == 0:
        return 0, 0
    for val in (GOOD, BAD):
        k = np.minimum(kept[:, val], _COUNT_CAP)
        draws = state.rng.binomial(k[src], p.p_p)
        # float64 accumulation is exact here: per-row sums stay below 2**53
        acc = np.bincount(dst, weights=draws, minlength=state.inbox_curr.shape[0])
        state.inbox_curr[:, val] = np.minimum(
            state.inbox_curr[:, val] + acc.astype(np.int64), _COUNT_CAP)
        delivered[val] = int(draws.sum())
    return delivered[GOOD], delivered[BAD]


def _stage_update(state: SimState) -> None:
    p = state.params
    humans = state.human_mask
    good_now = humans & (state.state == GOOD)
    bad_now = humans & (state.state == BAD)
    if p.flip_rule == "gross":
        to_bad = good_now & (state.counters[:, BAD] >= p.threshold_t)
        to_good = bad_now & (state.counters[:, GOOD] >= p.threshold_t)
    else:
        net_bad = state.counters[:, BAD] - state.counters[:, GOOD]
        to_bad = good_now & (net_bad >= p.threshold_t)
        to_good = bad_now & (-net_bad >= p.threshold_t)
    state.state[to_bad] = BAD
    state.state[to_good] = GOOD
    flipped = to_bad | to_good
    state.counters[flipped] = 0


def step(state: SimState) -> TickStats:
    """Advance the simulation by one tick and return its aggregate stats."""
    if state.terminated:
        raise StateError("cannot step a terminated simulation")
    gen_g, gen_b = _stage_generation(state)
    con_g, con_b = _stage_consumption(state)
    kept = _filter_for_relay(state)
    if state.debug:
        _check_valence_discipline(state, kept)
    if state.params.relay_mode == "fanout":
        rel_g, rel_b = _relay_fanout(state, kept)
    else:
        rel_g, rel_b = _relay_single(state, kept)
    _stage_update(state)

    # bookkeeping: swap buffers, advance the clock, record outcomes
    state.inbox_prev, state.inbox_curr = state.inbox_curr, state.inbox_prev
    state.inbox_curr[:] = 0
    state.tick += 1
    good, bad = state.human_state_counts()
    if state.bad_majority_tick is None and bad > good:
        state.bad_majority_tick = state.tick
    if state.all_bad_tick is None and bad == state.params.n_h:
        state.all_bad_tick = state.tick
    state.terminated = (state.all_bad_tick is not None
                        or state.tick >= state.params.max_ticks)
    return TickStats(
        tick=state.tick, good_humans=good, bad_humans=bad,
        good_generated=gen_g, bad_generated=gen_b,
        good_consumed=con_g, bad_consumed=con_b,
        good_relayed=rel_g, bad_relayed=rel_b,
    )


def _check_valence_discipline(state: SimState, kept: np.ndarray) -> None:
    """Debug-mode invariant: what each role may put on the wire."""
    role = state._role_of_edge
    ego_state = state.state[state.edge_receiver]
    bad_human = (role == AgentRole.HUMAN) & (ego_state == BAD)
    assert not kept[bad_human, GOOD].any(), "bad human relaying good info"
    assert not kept[role == AgentRole.GOOD_BOT, BAD].any(), "good bot relaying bad info"
    assert not kept[role == AgentRole.INFO_CORRECTION_BOT, BAD].any(), \
        "info-correction bot relaying bad info"
    assert not kept[role == AgentRole.BAD_BOT, GOOD].any(), "bad bot relaying good info"
    state.last_relay_by_role = {
        "bad_human_good": int(kept[bad_human, GOOD].sum()),
        "good_bot_bad": int(kept[role == AgentRole.GOOD_BOT, BAD].sum()),
        "ic_bot_bad": int(kept[role == AgentRole.INFO_CORRECTION_BOT, BAD].sum()),
        "bad_bot_good": int(kept[role == AgentRole.BAD_BOT, GOOD].sum()),
    }


def run_to_completion(state: SimState) -> RunOutcome:
    """Step until every Human is Bad or the tick cap is reached."""
    while not state.terminated:
        step(state)
    return state.outcome()


def run_params(params: SimParams, network: Optional[Network] = None) -> RunOutcome:
    """Convenience: init + run in one call."""
    return run_to_completion(init_simulation(params, network=network))
