"""Deterministic virtual message-passing environment (BSP-style).

Ranks execute in stage-synchronous rounds: everything a rank sends during
stage ``s`` is delivered at the start of stage ``s+1``. Execution is a
single-threaded round-robin over ranks, so traces and outputs are identical
across repeated runs. There is no real transport and no OS-level worker
pool; the contract is purely the stage-synchronous semantics.

The bundled rank program runs the dichotomy solve: each rank sweeps its own
range, the per-range interface contributions are allgathered in exactly
ceil(log2 p) dissemination rounds, and every rank then runs the identical
serial reduced solve and recovers its range. Outputs are therefore bitwise
equal to the single-process ``plan_solve``.
"""

from __future__ import annotations

import io as _io
import math

import numpy as np

from . import dichotomy
from .errors import DeadlockDetected, InvalidRankCount, StageViolation


class Message:
    """One delivered payload; ``nbytes`` is what the trace records."""

    __slots__ = ("sender", "receiver", "tag", "payload", "nbytes")

    def __init__(self, sender, receiver, tag, payload):
        self.sender = sender
        self.receiver = receiver
        self.tag = tag
        self.payload = payload
        if isinstance(payload, np.ndarray):
            self.nbytes = payload.nbytes
        elif isinstance(payload, (bytes, bytearray)):
            self.nbytes = len(payload)
        else:
            self.nbytes = 0


class ExecutionTrace:
    """Ordered per-stage message log of one run."""

    def __init__(self, nranks):
        self.nranks = nranks
        self.records = []  # (stage, sender, receiver, nbytes)

    def add(self, stage, msg: Message):
        self.records.append((stage, msg.sender, msg.receiver, msg.nbytes))

    @property
    def stages(self) -> int:
        return max((r[0] for r in self.records), default=-1) + 1

    def per_rank_stages(self):
        """Distinct stages in which each rank sent or received."""
        active = [set() for _ in range(self.nranks)]
        for stage, snd, rcv, _ in self.records:
            active[snd].add(stage)
            active[rcv].add(stage)
        return [len(s) for s in active]

    def stage_rank_bytes(self):
        """bytes sent per (stage, rank)."""
        out = {}
        for stage, snd, _, nbytes in self.records:
            out[(stage, snd)] = out.get((stage, snd), 0) + nbytes
        return out

    def max_message_bytes(self) -> int:
        return max((r[3] for r in self.records), default=0)

    def total_bytes(self) -> int:
        return sum(r[3] for r in self.records)

    def to_csv(self, path=None):
        buf = _io.StringIO()
        buf.write("stage,sender,receiver,bytes\n")
        for rec in self.records:
            buf.write("%d,%d,%d,%d\n" % rec)
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


class RankProgram:
    """Deterministic per-rank step function.

    Subclasses set ``self.done = True`` and fill ``self.output`` when
    finished; ``step`` returns the list of Messages to send this stage.
    """

    def __init__(self, rank: int, nranks: int, local_input):
        self.rank = rank
        self.nranks = nranks
        self.local_input = local_input
        self.done = False
        self.output = None

    def step(self, stage: int, inbox):  # pragma: no cover - interface
        raise NotImplementedError


def run_ranks(nranks: int, program_factory, inputs):
    """Execute ``nranks`` programs to completion.

    ``inputs`` is a sequence of per-rank local inputs. Returns
    ``(outputs, trace)``. Raises DeadlockDetected when undone ranks can no
    longer receive anything.
    """
    if nranks < 1:
        raise InvalidRankCount(f"need at least one rank, got {nranks}")
    programs = [program_factory(q, nranks, inputs[q]) for q in range(nranks)]
    trace = ExecutionTrace(nranks)
    inboxes = [[] for _ in range(nranks)]
    stage = 0
    while not all(p.done for p in programs):
        sends = []
        progressed = False
        for q, prog in enumerate(programs):
            if prog.done:
                continue
            out = prog.step(stage, inboxes[q]) or []
            for msg in out:
                if not 0 <= msg.receiver < nranks:
                    raise InvalidRankCount(f"send to unknown rank {msg.receiver}")
                sends.append(msg)
            if prog.done:
                progressed = True
        inboxes = [[] for _ in range(nranks)]
        for msg in sends:
            trace.add(stage, msg)
            inboxes[msg.receiver].append(msg)
        if not sends and not progressed and not all(p.done for p in programs):
            waiting = [q for q, p in enumerate(programs) if not p.done]
            raise DeadlockDetected(f"ranks {waiting} wait on messages never sent")
        stage += 1
    return [p.output for p in programs], trace


class DichotomyRankProgram(RankProgram):
    """Distributed dichotomy solve over a prebuilt plan.

    ``local_input`` is ``(plan, f_range)`` with ``f_range`` the (L, m[, k])
    right-hand-side rows of this rank's range (padded rows included).
    Contribution pairs (base, carry) are allgathered by dissemination in
    exactly ceil(log2 p) rounds; messages are chunked so no single payload
    exceeds M^2 + M doubles per right-hand side.
    """

    def __init__(self, rank, nranks, local_input):
        super().__init__(rank, nranks, local_input)
        plan, f_range = local_input
        self.plan = plan
        self.f_range = np.ascontiguousarray(np.asarray(f_range, dtype=np.float64))
        self.rounds = (nranks - 1).bit_length()
        self.slots = [None] * nranks
        self.w = None

    def _slot_cap(self) -> int:
        """Slots per message so a payload stays within M^2 + M doubles/rhs."""
        m = self.plan.m
        return max(1, (m * m + m) // (2 * m))

    def _send_window(self, start, count, dest):
        msgs = []
        cap = self._slot_cap()
        for ofs in range(0, count, cap):
            chunk = [self.slots[(start + j) % self.nranks]
                     for j in range(ofs, min(ofs + cap, count))]
            payload = np.ascontiguousarray(np.stack(chunk))
            tag = (start + ofs) % self.nranks
            msgs.append(Message(self.rank, dest, tag, payload))
        return msgs

    def _finish(self):
        plan = self.plan
        bases = [self.slots[q][0] for q in range(self.nranks)]
        carries = [self.slots[q][1] for q in range(self.nranks)]
        ftilde = dichotomy.assemble_reduced_rhs(bases, carries)
        xt = dichotomy.reduced_solve(plan.reduced, plan.tree, plan.inverse_rows, ftilde)
        zero = np.zeros_like(xt[0])
        xt_next = xt[self.rank + 1] if self.rank + 1 < self.nranks else zero
        self.output = dichotomy._recover_range(plan, self.rank, xt[self.rank],
                                               xt_next, self.w)
        self.done = True

    def step(self, stage, inbox):
        if stage == 0:
            plan, q = self.plan, self.rank
            self.w = dichotomy._range_w(plan, q, self.f_range)
            base, carry = dichotomy.range_rhs_contribution(
                plan.padded, plan.ranges[q], q, self.nranks, self.f_range, self.w
            )
            self.slots[q] = np.ascontiguousarray(np.stack([base, carry]))
            if self.rounds == 0:
                self._finish()
                return []
        else:
            for msg in sorted(inbox, key=lambda m: (m.sender, m.tag)):
                start = msg.tag
                for j, pair in enumerate(msg.payload):
                    self.slots[(start + j) % self.nranks] = pair
        if stage < self.rounds:
            shift = 1 << stage
            count = min(shift, self.nranks - shift)
            dest = (self.rank - shift) % self.nranks
            return self._send_window(self.rank, count, dest)
        self._finish()
        return []


def harness_solve(plan, f):
    """Run the dichotomy rank programs over a full right-hand side.

    Returns ``(x, trace)``; ``x`` is bitwise equal to ``plan_solve(plan, f)``.
    """
    data = np.asarray(f, dtype=np.float64)
    if plan.npad != plan.n:
        pad = np.zeros((plan.npad - plan.n,) + data.shape[1:])
        data_p = np.concatenate([data, pad])
    else:
        data_p = data
    inputs = [(plan, data_p[rg.lo : rg.hi]) for rg in plan.ranges]
    outputs, trace = run_ranks(plan.ranks, DichotomyRankProgram, inputs)
    x = np.concatenate(outputs)[: plan.n]
    return np.ascontiguousarray(x), trace


class CostModelParams:
    """Latency/bandwidth model inputs: alpha [s], beta [s/byte], block order, ranks."""

    __slots__ = ("alpha", "beta", "m", "p")

    def __init__(self, alpha, beta, m, p):
        if alpha < 0 or beta < 0:
            raise ValueError("alpha and beta must be nonnegative")
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.m = int(m)
        self.p = int(p)


def predict_preprocess_comm(params: CostModelParams) -> float:
    """Model time to replicate the reduced matrix: alpha*log2 p + p/(p-1)*beta*M^2."""
    if params.p < 2:
        raise InvalidRankCount("communication model needs p >= 2")
    return params.alpha * math.log2(params.p) + (
        params.p / (params.p - 1)
    ) * params.beta * params.m**2


def predict_solve_comm(params: CostModelParams) -> float:
    """Model time of the per-RHS dichotomy exchange: alpha*log2^2 p + 4 M^2 log2(p) beta."""
    if params.p < 2:
        raise InvalidRankCount("communication model needs p >= 2")
    lg = math.log2(params.p)
    return params.alpha * lg * lg + 4.0 * params.m**2 * lg * params.beta


def audit_trace(trace: ExecutionTrace, params: CostModelParams, nrhs: int = 1):
    """Check the stage structure of a dichotomy-solve trace and cost it.

    Asserts exactly ceil(log2 p) stages and that no single message exceeds
    (M^2 + M) * nrhs doubles (the recovery-unit cap the sender chunks to).
    Per-rank per-stage totals are reported, not capped: the allgather
    pattern moves M*min(2^t, p-2^t) doubles per rank in round t, which
    cannot stay under a fixed multiple of M^2 for p >> M.

    The reported ``trace_model_seconds`` prices the trace under the BSP cost
    alpha + beta * max-bytes-per-rank, summed over stages;
    ``model_residual`` is its difference from predict_solve_comm.
    """
    expected = math.ceil(math.log2(params.p)) if params.p > 1 else 0
    stages = trace.stages
    if stages != expected:
        raise StageViolation(f"trace has {stages} stages, expected {expected}")
    per_message_cap = (params.m**2 + params.m) * 8 * nrhs
    worst = trace.max_message_bytes()
    if worst > per_message_cap:
        raise StageViolation(
            f"message of {worst} bytes exceeds cap {per_message_cap}"
        )
    srb = trace.stage_rank_bytes()
    per_stage_max = [0] * stages
    for (stage, _rank), nbytes in srb.items():
        per_stage_max[stage] = max(per_stage_max[stage], nbytes)
    trace_model = sum(params.alpha + params.beta * h for h in per_stage_max)
    model = predict_solve_comm(params) if params.p >= 2 else 0.0
    return {
        "stages": stages,
        "max_message_bytes": worst,
        "max_stage_rank_bytes": max(per_stage_max, default=0),
        "total_bytes": trace.total_bytes(),
        "trace_model_seconds": trace_model,
        "predict_solve_seconds": model,
        "model_residual": trace_model - model,
    }
