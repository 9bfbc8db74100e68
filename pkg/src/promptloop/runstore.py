"""Append-only, replayable event log of an optimization run.

The log file is UTF-8 JSONL: the first line is the run manifest, every
following line one event. Events are canonically serialized (sorted keys,
compact separators, shortest round-trip decimals), so log equality is a byte
comparison. Timestamps inside events are logical (equal to the sequence
number); wall-clock time appears only in the manifest.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .errors import DigestMismatchError, LogError

ARTIFACT_VERSION = "0.1.0"

EVENT_KINDS = frozenset(
    {
        "RunStarted",
        "RoundStarted",
        "SampleGenerated",
        "SampleScored",
        "FeedbackIssued",
        "RoundSummarized",
        "ThresholdUpdated",
        "ArchivesUpdated",
        "PromptRegenerated",
        "PhaseTransition",
        "MutationApplied",
        "MutationRejected",
        "BackendFailure",
        "RunFinished",
    }
)

#: Event kinds at which the engine state is durably consistent; replay only
#: restores state as of the latest one of these.
COMMIT_KINDS = frozenset(
    {
        "RunStarted",
        "PromptRegenerated",
        "PhaseTransition",
        "MutationApplied",
        "MutationRejected",
        "RunFinished",
    }
)


def canonical_json(value) -> str:
    return json.dumps(
        value, sort_keys=True, ensure_ascii=False, separators=(",", ":"), allow_nan=False
    )


@dataclass(frozen=True)
class RunEvent:
    seq: int
    ts: int
    kind: str
    payload: dict

    def to_line(self) -> str:
        return canonical_json({"seq": self.seq, "ts": self.ts, "kind": self.kind, "payload": self.payload})

    @classmethod
    def from_line(cls, line: str) -> "RunEvent":
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise LogError(f"corrupt event line: {exc}") from exc
        try:
            event = cls(seq=raw["seq"], ts=raw["ts"], kind=raw["kind"], payload=raw["payload"])
        except (KeyError, TypeError) as exc:
            raise LogError(f"event line missing fields: {line[:80]!r}") from exc
        if event.kind not in EVENT_KINDS:
            raise LogError(f"unknown event kind {event.kind!r}")
        return event


def build_manifest(
    run_id: str,
    config_digest: str,
    corpus_digest: str,
    backend: dict,
    created_at: str | None = None,
) -> dict:
    if created_at is None:
        created_at = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return {
        "run_id": run_id,
        "config_digest": config_digest,
        "corpus_digest": corpus_digest,
        "backend": backend,
        "artifact_version": ARTIFACT_VERSION,
        "created_at": created_at,
    }


class EventLog:
    """Single-appender event log bound to one file path.

    ``start`` creates the file with the manifest line; ``emit`` appends the
    next event and flushes before returning, so the engine never advances past
    an unwritten event. Appends are validated: sequence numbers must be
    contiguous from 1, the first event must be RunStarted, and nothing may
    follow RunFinished.
    """

    def __init__(self, path) -> None:
        self.path = os.fspath(path)
        self._handle = None
        self._last_seq = 0
        self._finished = False
        self._started = False

    def start(self, manifest: dict) -> None:
        if self._handle is not None:
            raise LogError("log already open")
        self._handle = open(self.path, "w", encoding="utf-8", newline="\n")
        self._handle.write(canonical_json(manifest) + "\n")
        self._handle.flush()

    def resume_at(self, manifest: dict, events: list[RunEvent], keep_seq: int) -> None:
        """Reopen the log keeping the manifest and the events up to
        ``keep_seq``; any later (uncommitted) lines are dropped so appended
        events continue a contiguous sequence."""
        if self._handle is not None:
            raise LogError("log already open")
        kept = [event for event in events if event.seq <= keep_seq]
        self._handle = open(self.path, "w", encoding="utf-8", newline="\n")
        self._handle.write(canonical_json(manifest) + "\n")
        for event in kept:
            self._handle.write(event.to_line() + "\n")
        self._handle.flush()
        self._last_seq = keep_seq
        self._started = bool(kept)
        self._finished = bool(kept) and kept[-1].kind == "RunFinished"

    def append(self, event: RunEvent) -> None:
        if self._handle is None:
            raise LogError("log is not open")
        if self._finished:
            raise LogError("cannot append after RunFinished")
        if event.seq != self._last_seq + 1:
            raise LogError(
                f"sequence gap: expected {self._last_seq + 1}, got {event.seq}"
            )
        if event.ts != event.seq:
            raise LogError("event ts must equal its sequence number")
        if not self._started and event.kind != "RunStarted":
            raise LogError("first event must be RunStarted")
        if self._started and event.kind == "RunStarted":
            raise LogError("duplicate RunStarted")
        if event.kind not in EVENT_KINDS:
            raise LogError(f"unknown event kind {event.kind!r}")
        try:
            self._handle.write(event.to_line() + "\n")
            self._handle.flush()
        except OSError as exc:
            raise LogError(f"cannot append to {self.path}: {exc}") from exc
        self._last_seq = event.seq
        self._started = True
        if event.kind == "RunFinished":
            self._finished = True

    def emit(self, kind: str, payload: dict) -> RunEvent:
        event = RunEvent(seq=self._last_seq + 1, ts=self._last_seq + 1, kind=kind, payload=payload)
        self.append(event)
        return event

    def close(self) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None


def read_log(path) -> tuple[dict, list[RunEvent]]:
    """Parse a log file into (manifest, events).

    A half-written final line (the classic crash artifact) is dropped; corrupt
    lines anywhere else raise. Sequence contiguity is enforced.
    """
    try:
        with open(path, encoding="utf-8") as handle:
            lines = handle.read().split("\n")
    except OSError as exc:
        raise LogError(f"cannot read log {path}: {exc}") from exc
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise LogError(f"log {path} is empty")
    try:
        manifest = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise LogError(f"corrupt manifest line: {exc}") from exc
    if not isinstance(manifest, dict) or "run_id" not in manifest:
        raise LogError("first line is not a run manifest")
    events: list[RunEvent] = []
    for i, line in enumerate(lines[1:], start=2):
        try:
            event = RunEvent.from_line(line)
        except LogError:
            if i == len(lines):
                break  # trailing partial write
            raise
        expected = events[-1].seq + 1 if events else 1
        if event.seq != expected:
            raise LogError(f"sequence gap at line {i}: expected {expected}, got {event.seq}")
        events.append(event)
    if events:
        if events[0].kind != "RunStarted":
            raise LogError("first event must be RunStarted")
        for event in events[:-1]:
            if event.kind == "RunFinished":
                raise LogError("events found after RunFinished")
    return manifest, events


@dataclass
class ReplayResult:
    """Committed engine state reconstructed from a log prefix."""

    manifest: dict
    events: list[RunEvent]
    task_prompt: str
    state: object  # engine.EngineState
    chat_calls: dict[str, int]
    committed_seq: int
    finished: bool


def replay_log(path, engine_config) -> ReplayResult:
    """Fold a log into the engine state at its last commit point.

    The fold re-applies the engine's own pure update rules (means, threshold,
    archives, RNG draws) to the recorded values and cross-checks them against
    the logged payloads, so a tampered or corrupt log is rejected rather than
    replayed.
    """
    from . import mutation as mutation_mod
    from .engine import (
        ArchiveEntry,
        EngineState,
        PromptArchive,
        PromptCandidate,
        SplitMix64,
        round_mean,
        update_archives,
    )

    manifest, events = read_log(path)
    if not events:
        raise LogError(f"log {path} has a manifest but no events")

    state = EngineState(
        best=PromptArchive(engine_config.best_capacity, keep="best"),
        worst=PromptArchive(engine_config.worst_capacity, keep="worst"),
        rng_state=SplitMix64(engine_config.seed).state,
    )
    rng = SplitMix64(engine_config.seed)
    rng.state = state.rng_state
    plans: dict[str, str] = {}
    task_prompt = ""
    chat_calls: dict[str, int] = {}
    pending_scores: list[float] = []
    pending_candidate: PromptCandidate | None = None

    committed = state.clone()
    committed_calls: dict[str, int] = {}
    committed_seq = 0
    finished = False

    def commit(seq: int) -> None:
        nonlocal committed, committed_calls, committed_seq
        state.rng_state = rng.state
        committed = state.clone()
        committed_calls = dict(chat_calls)
        committed_seq = seq

    for event in events:
        kind, payload = event.kind, event.payload
        if kind == "RunStarted":
            task_prompt = payload["task_prompt"]
            commit(event.seq)
        elif kind == "RoundStarted":
            pending_scores = []
            pending_candidate = PromptCandidate(
                id=payload["candidate_id"],
                task_prompt=task_prompt,
                step_plan=payload["step_plan"],
                origin=payload["origin"],
                round=payload["round"],
            )
            plans[payload["candidate_id"]] = payload["step_plan"]
        elif kind == "SampleScored":
            pending_scores.append(payload["score"])
        elif kind == "ThresholdUpdated":
            value = payload["value"]
            expected = round_mean(pending_scores) if pending_scores else None
            if expected is not None and value != expected:
                raise LogError(
                    f"event {event.seq}: threshold {value!r} does not match round mean {expected!r}"
                )
            if state.threshold is not None and value < state.threshold:
                raise LogError(f"event {event.seq}: threshold decreased")
            state.threshold = value
        elif kind == "ArchivesUpdated":
            if pending_candidate is None:
                raise LogError(f"event {event.seq}: ArchivesUpdated outside a round")
            pending_candidate.score = payload["score"]
            state.arrival_counter += 1
            update_archives(state.best, state.worst, pending_candidate, state.arrival_counter)
            if state.best.snapshot() != payload["best"] or state.worst.snapshot() != payload["worst"]:
                raise LogError(f"event {event.seq}: archive snapshot mismatch")
        elif kind == "PromptRegenerated":
            candidate = PromptCandidate(
                id=payload["candidate_id"],
                task_prompt=task_prompt,
                step_plan=payload["step_plan"],
                origin=payload["origin"],
                round=payload["for_round"],
            )
            plans[candidate.id] = candidate.step_plan
            state.current = candidate
            state.round = payload["round"]
            chat_calls = dict(payload["chat_calls"])
            commit(event.seq)
        elif kind == "PhaseTransition":
            state.phase = payload["to"]
            commit(event.seq)
        elif kind in ("MutationApplied", "MutationRejected"):
            source_plan = plans.get(payload["source_candidate_id"])
            if source_plan is None:
                raise LogError(
                    f"event {event.seq}: unknown source candidate {payload['source_candidate_id']}"
                )
            archive_index = rng.below(len(state.best.entries))
            sentence_count = len(mutation_mod.segment_sentences(source_plan).sentences)
            sentence_index = rng.below(sentence_count)
            if archive_index != payload["archive_index"] or sentence_index != payload["sentence_index"]:
                raise LogError(f"event {event.seq}: RNG draws do not match the recorded picks")
            if kind == "MutationApplied":
                state.arrival_counter += 1
                entry = ArchiveEntry(
                    candidate_id=payload["candidate_id"],
                    step_plan=payload["step_plan"],
                    score=payload["score"],
                    arrival=state.arrival_counter,
                )
                plans[entry.candidate_id] = entry.step_plan
                inserted, _ = state.best.offer(entry)
                if not inserted or state.best.snapshot() != payload["best"]:
                    raise LogError(f"event {event.seq}: mutation archive mismatch")
                state.mutations_applied += 1
            else:
                state.mutations_rejected += 1
            state.mutation_step = payload["step"]
            chat_calls = dict(payload["chat_calls"])
            commit(event.seq)
        elif kind == "RunFinished":
            finished = True
            commit(event.seq)
        # SampleGenerated, FeedbackIssued, RoundSummarized, BackendFailure:
        # informational; they carry no state beyond what the commit events hold.

    return ReplayResult(
        manifest=manifest,
        events=events,
        task_prompt=task_prompt,
        state=committed,
        chat_calls=committed_calls,
        committed_seq=committed_seq,
        finished=finished,
    )


def check_digests(manifest: dict, config_digest: str, corpus_digest: str) -> None:
    if manifest.get("config_digest") != config_digest:
        raise DigestMismatchError(
            f"config digest mismatch: log has {manifest.get('config_digest')}, "
            f"supplied config digests to {config_digest}"
        )
    if manifest.get("corpus_digest") != corpus_digest:
        raise DigestMismatchError(
            f"corpus digest mismatch: log has {manifest.get('corpus_digest')}, "
            f"supplied corpus digests to {corpus_digest}"
        )


def summarize_log(path) -> dict:
    """Project a log into the report structure."""
    manifest, events = read_log(path)
    if not events:
        raise LogError(f"log {path} has no events to report on")
    rounds: list[dict] = []
    threshold_trajectory: list[float] = []
    mutations_applied = 0
    mutations_rejected = 0
    final: dict | None = None
    threshold: float | None = None
    best_max: float | None = None
    for event in events:
        payload = event.payload
        if event.kind == "ThresholdUpdated":
            threshold = payload["value"]
            threshold_trajectory.append(threshold)
        elif event.kind == "ArchivesUpdated":
            best_max = payload["best"][0]["score"] if payload["best"] else None
            rounds.append(
                {
                    "round": payload["round"],
                    "candidate_id": payload["candidate_id"],
                    "mean_score": payload["score"],
                    "threshold": threshold,
                    "best_max": best_max,
                }
            )
        elif event.kind == "MutationApplied":
            mutations_applied += 1
            best_max = payload["best"][0]["score"] if payload["best"] else best_max
        elif event.kind == "MutationRejected":
            mutations_rejected += 1
        elif event.kind == "RunFinished":
            final = payload
    summary = {
        "run_id": manifest["run_id"],
        "finished": final is not None,
        "rounds": rounds,
        "threshold_trajectory": threshold_trajectory,
        "mutations_applied": mutations_applied,
        "mutations_rejected": mutations_rejected,
    }
    if final is not None:
        summary["best_candidate_id"] = final["best_candidate_id"]
        summary["best_score"] = final["best_score"]
        summary["best_step_plan"] = final["best_step_plan"]
    elif best_max is not None:
        summary["best_score"] = best_max
    return summary


def emit_report(path, format: str = "json") -> str:
    """Render a human-readable report of a run log."""
    summary = summarize_log(path)
    if format == "json":
        return json.dumps(summary, indent=2, ensure_ascii=False, sort_keys=True) + "\n"
    if format != "markdown":
        raise ValueError(f"unknown report format {format!r}")
    lines = [
        f"# Run {summary['run_id']}",
        "",
        f"- finished: {str(summary['finished']).lower()}",
        f"- mutations applied: {summary['mutations_applied']}",
        f"- mutations rejected: {summary['mutations_rejected']}",
        "",
        "| round | mean score | threshold | best max |",
        "|------:|-----------:|----------:|---------:|",
    ]
    for row in summary["rounds"]:
        lines.append(
            f"| {row['round']} | {row['mean_score']!r} | {row['threshold']!r} | {row['best_max']!r} |"
        )
    if "best_step_plan" in summary:
        lines += [
            "",
            f"## Best prompt (score {summary['best_score']!r})",
            "",
            summary["best_step_plan"],
        ]
    return "\n".join(lines) + "\n"
