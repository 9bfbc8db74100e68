import json
import os
from dataclasses import dataclass

import pytest

from promptloop.config import (
    CliConfig,
    config_digest,
    corpus_digest,
    resolve_config,
    run_id_for,
)
from promptloop.engine import Engine
from promptloop.gateway import BackendDescriptor, MockBackend
from promptloop.runstore import EventLog, build_manifest, read_log
from promptloop.scoring import CorpusEvaluator, EmbeddingCache, ReferenceCorpus

DEFAULT_TASK = "Schreibe einen Arztbrief aus der Kardiologie."

CORPUS_TEXTS = [
    "Der Patient ist kardial stabil. Die Entlassung erfolgt morgen.",
    "Die Medikation wird unverändert fortgeführt.",
]

FIXED_CREATED_AT = "2026-01-01T00:00:00+00:00"


@pytest.fixture
def mock_backend():
    return MockBackend(BackendDescriptor(kind="mock"))


@pytest.fixture
def cache(mock_backend):
    return EmbeddingCache(mock_backend)


def make_corpus(cache, texts=None):
    texts = list(texts or CORPUS_TEXTS)
    return ReferenceCorpus(documents=texts, embeddings=[cache.embed_one(t) for t in texts])


@dataclass
class Harness:
    """One fully wired engine over the scripted mock, ready to run."""

    engine: Engine
    backend: MockBackend
    cache: EmbeddingCache
    corpus: ReferenceCorpus
    evaluator: CorpusEvaluator
    config: CliConfig
    log_path: str
    config_digest: str
    corpus_digest: str
    task: str

    def run(self):
        result = self.engine.run(self.manifest())
        self.engine.log.close()
        return result

    def manifest(self):
        run_id = run_id_for(self.config_digest, self.corpus_digest, self.task)
        return build_manifest(
            run_id=run_id,
            config_digest=self.config_digest,
            corpus_digest=self.corpus_digest,
            backend={"kind": "mock", "model_name": self.config.backend.model_name},
            created_at=FIXED_CREATED_AT,
        )

    def events(self):
        _, events = read_log(self.log_path)
        return events


def scripted_plans(max_rounds, stem="Schritt eins. Schritt zwei. Schritt drei."):
    """Short scripted plans for every regeneration, so plans stay bounded."""
    return [f"Plan {i}: {stem}" for i in range(max_rounds + 1)]


def make_harness(
    tmp_path,
    *,
    engine=None,
    scripts=None,
    corpus_texts=None,
    task=DEFAULT_TASK,
    name="run",
    evaluator=None,
):
    """Build a Harness from plain config-dict overrides."""
    engine_section = {
        "samples_per_round": 2,
        "best_capacity": 3,
        "worst_capacity": 3,
        "max_rounds": 4,
        "mutation_budget": 0,
        "seed": 42,
    }
    engine_section.update(engine or {})
    doc = {
        "version": 1,
        "backend": {"kind": "mock"},
        "engine": engine_section,
        "corpus_path": "unused",
    }
    if scripts:
        doc["scripts"] = {role.value: list(items) for role, items in scripts.items()}
    config = resolve_config(doc, env={})
    backend = MockBackend(config.backend, config.scripts)
    cache = EmbeddingCache(backend)
    corpus = make_corpus(cache, corpus_texts)
    if evaluator is None:
        evaluator = CorpusEvaluator(corpus, cache)
    log_path = os.path.join(tmp_path, f"{name}.jsonl")
    eng = Engine(backend, evaluator, config.engine, EventLog(log_path), task)
    return Harness(
        engine=eng,
        backend=backend,
        cache=cache,
        corpus=corpus,
        evaluator=evaluator,
        config=config,
        log_path=log_path,
        config_digest=config_digest(config),
        corpus_digest=corpus_digest(corpus.documents),
        task=task,
    )


class FakeEvaluator:
    """Scorer stub: pops a scripted score queue, then repeats the last one."""

    def __init__(self, scores):
        self.scores = list(scores)
        self.served = []

    def score(self, text):
        value = self.scores.pop(0) if len(self.scores) > 1 else self.scores[0]
        self.served.append((text, value))
        return value


def events_by_kind(events, kind):
    return [e for e in events if e.kind == kind]


def round_of(events, candidate_id):
    for event in events:
        if event.kind == "RoundStarted" and event.payload["candidate_id"] == candidate_id:
            return event.payload["round"]
    return None


def write_config_file(tmp_path, doc, name="config.json"):
    path = os.path.join(tmp_path, name)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(doc, handle, ensure_ascii=False)
    return path


def write_corpus_file(tmp_path, texts, name="corpus.jsonl"):
    path = os.path.join(tmp_path, name)
    with open(path, "w", encoding="utf-8") as handle:
        for text in texts:
            handle.write(json.dumps({"text": text}, ensure_ascii=False) + "\n")
    return path
