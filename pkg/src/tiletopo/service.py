"""HTTP backend for the side-by-side perceptual study.

Participants see a photo tile and its ground-truth map as labeled
references plus the candidate model outputs in anonymized, per-question
shuffled order, and pick the best candidate. Votes land in an append-only
JSON-lines log; statistics are always derived by aggregation, never
stored, so replaying the log reconstructs them exactly.

Candidate order is shuffled with a seed derived from (session, question).
That keeps model identities hidden from participants while letting an
auditor reconstruct exactly what order every participant saw.
"""

import hashlib
import json
import random
import secrets
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse
from fastapi.staticfiles import StaticFiles

PAYLOAD_VERSION = 1
TRUTH_CHOICE = "__truth__"


@dataclass(frozen=True)
class StudySample:
    id: str
    input_path: str
    truth_path: str
    outputs: dict  # model name -> path


@dataclass(frozen=True)
class StudyConfig:
    name: str
    models: tuple
    samples: tuple
    include_truth_option: bool = False

    def __post_init__(self):
        if len(self.models) < 2:
            raise ValueError("a study needs at least two models")
        if len(set(self.models)) != len(self.models):
            raise ValueError("duplicate model names in study")
        if not self.samples:
            raise ValueError("a study needs at least one sample")
        for s in self.samples:
            if set(s.outputs) != set(self.models):
                raise ValueError(
                    f"sample {s.id!r} outputs {sorted(s.outputs)} do not match "
                    f"the study model set {sorted(self.models)}"
                )


def load_study(path):
    """Load a study config JSON and verify every referenced file exists.

    Schema: {name, models: [..], include_truth_option?, samples:
    [{id, input, truth, outputs: {model: path}}]}. Paths are relative to
    the config file.
    """
    path = Path(path)
    doc = json.loads(path.read_text())
    base = path.parent
    samples = []
    for raw in doc.get("samples", []):
        sample = StudySample(
            id=str(raw["id"]),
            input_path=str(base / raw["input"]),
            truth_path=str(base / raw["truth"]),
            outputs={m: str(base / p) for m, p in raw["outputs"].items()},
        )
        samples.append(sample)
    study = StudyConfig(
        name=str(doc.get("name", path.stem)),
        models=tuple(doc["models"]),
        samples=tuple(samples),
        include_truth_option=bool(doc.get("include_truth_option", False)),
    )
    missing = []
    for s in study.samples:
        for p in [s.input_path, s.truth_path, *s.outputs.values()]:
            if not Path(p).is_file():
                missing.append(p)
    if missing:
        raise FileNotFoundError(f"study references missing files: {sorted(missing)}")
    return study


@dataclass(frozen=True)
class VoteRecord:
    session: str
    question: str
    sample: str
    model: str
    timestamp: float


def _derived_rng_tokens(session, question):
    digest = hashlib.sha256(f"{session}/{question}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def candidate_assignment(study, session, question, sample):
    """Candidate-id to model mapping for one (session, question) pair.

    The shuffle seed is derived from the session and question ids, so the
    assignment can be reconstructed after the fact from the vote log
    alone. Candidate ids are positional ("c1", "c2", ...) and carry no
    model information.
    """
    entries = list(study.models)
    if study.include_truth_option:
        entries.append(TRUTH_CHOICE)
    rng = random.Random(_derived_rng_tokens(session, question))
    rng.shuffle(entries)
    return {f"c{i + 1}": (sample, entry) for i, entry in enumerate(entries)}


class VoteLog:
    """Append-only JSONL vote store with serialized writes."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, rec):
        line = json.dumps({
            "v": PAYLOAD_VERSION,
            "session": rec.session,
            "question": rec.question,
            "sample": rec.sample,
            "model": rec.model,
            "ts": rec.timestamp,
        }, sort_keys=True)
        with self._lock:
            with open(self.path, "a") as fh:
                fh.write(line + "\n")

    def replay(self):
        """Reconstruct all vote records from the log file."""
        if not self.path.exists():
            return []
        records = []
        for line in self.path.read_text().splitlines():
            if not line.strip():
                continue
            doc = json.loads(line)
            records.append(VoteRecord(
                session=doc["session"], question=doc["question"],
                sample=doc["sample"], model=doc["model"], timestamp=doc["ts"]))
        return records


def tally(votes, models):
    """Per-model counts and percentages in Table shape.

    Percentages are 100 * count / total; all zeros with total 0 when no
    votes exist.
    """
    counts = {m: 0 for m in models}
    extra = {}
    for v in votes:
        if v.model in counts:
            counts[v.model] += 1
        else:
            extra[v.model] = extra.get(v.model, 0) + 1
    counts.update(extra)
    total = sum(counts.values())
    rows = []
    for model in counts:
        pct = 100.0 * counts[model] / total if total else 0.0
        rows.append({"model": model, "count": counts[model], "percentage": pct})
    return {"total": total, "models": rows}


class StudyState:
    """In-memory session book-keeping over an event-sourced vote log."""

    def __init__(self, study, vote_log):
        self.study = study
        self.votes = vote_log
        self._lock = threading.Lock()
        self._sessions = {}

    def create_session(self):
        sid = secrets.token_hex(8)
        order = list(range(len(self.study.samples)))
        random.Random(_derived_rng_tokens(sid, "order")).shuffle(order)
        with self._lock:
            self._sessions[sid] = {"order": order, "answered": {}}
        return sid

    def _session(self, sid):
        with self._lock:
            sess = self._sessions.get(sid)
        if sess is None:
            raise KeyError(sid)
        return sess

    def next_question(self, sid):
        sess = self._session(sid)
        with self._lock:
            idx = len(sess["answered"])
            if idx >= len(sess["order"]):
                return None
            qid = f"q{idx + 1:04d}"
            sample = self.study.samples[sess["order"][idx]]
        assignment = candidate_assignment(self.study, sid, qid, sample.id)
        candidates = [
            {"id": cid, "url": f"/api/candidate-image?session={sid}&question={qid}&id={cid}"}
            for cid in sorted(assignment, key=lambda c: int(c[1:]))
        ]
        return {
            "v": PAYLOAD_VERSION,
            "question": qid,
            "input_url": f"/api/sample-image?session={sid}&question={qid}&kind=input",
            "truth_url": f"/api/sample-image?session={sid}&question={qid}&kind=truth",
            "candidates": candidates,
            "progress": {"answered": idx, "total": len(sess["order"])},
        }

    def resolve_question(self, sid, qid):
        """Sample shown for a question id, or None if not yet reachable."""
        sess = self._session(sid)
        try:
            idx = int(qid.lstrip("q")) - 1
        except ValueError:
            return None
        with self._lock:
            if not (0 <= idx < len(sess["order"])):
                return None
            if idx > len(sess["answered"]):
                return None
            return self.study.samples[sess["order"][idx]]

    def submit_vote(self, sid, qid, choice):
        sample = self.resolve_question(sid, qid)
        if sample is None:
            raise ValueError(f"question {qid!r} is not open for this session")
        sess = self._session(sid)
        with self._lock:
            if qid in sess["answered"]:
                return {"accepted": False, "duplicate": True}
        assignment = candidate_assignment(self.study, sid, qid, sample.id)
        if choice not in assignment:
            raise ValueError(f"unknown candidate {choice!r}")
        model = assignment[choice][1]
        rec = VoteRecord(
            session=sid, question=qid, sample=sample.id,
            model=model, timestamp=time.time())
        with self._lock:
            if qid in sess["answered"]:
                return {"accepted": False, "duplicate": True}
            sess["answered"][qid] = choice
        self.votes.append(rec)
        return {"accepted": True, "duplicate": False}

    def stats(self):
        names = list(self.study.models)
        if self.study.include_truth_option:
            names.append(TRUTH_CHOICE)
        return tally(self.votes.replay(), names)


def create_app(study, vote_log_path, frontend_dir=None, images_dir=None):
    """Build the FastAPI application for one study.

    ``images_dir`` mounts a directory of static study assets under
    /images; ``frontend_dir`` serves a built single-page UI at the root.
    """
    state = StudyState(study, VoteLog(vote_log_path))
    app = FastAPI(title="perception study")
    app.state.study_state = state

    @app.post("/api/session")
    def api_session():
        sid = state.create_session()
        return {"v": PAYLOAD_VERSION, "session": sid,
                "questions": len(study.samples)}

    @app.get("/api/question")
    def api_question(session: str):
        try:
            payload = state.next_question(session)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown session")
        if payload is None:
            return {"v": PAYLOAD_VERSION, "complete": True,
                    "answered": len(study.samples)}
        return payload

    @app.post("/api/vote")
    def api_vote(body: dict):
        for key in ("session", "question", "choice"):
            if key not in body:
                raise HTTPException(status_code=422, detail=f"missing field {key!r}")
        try:
            result = state.submit_vote(body["session"], body["question"], body["choice"])
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown session")
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"v": PAYLOAD_VERSION, "ok": True, "duplicate": result["duplicate"]}

    @app.get("/api/stats")
    def api_stats():
        result = state.stats()
        return {"v": PAYLOAD_VERSION, "total": result["total"],
                "models": result["models"]}

    def _open_sample(session, question):
        try:
            sample = state.resolve_question(session, question)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown session")
        if sample is None:
            raise HTTPException(status_code=404, detail="question not open")
        return sample

    @app.get("/api/sample-image")
    def api_sample_image(session: str, question: str, kind: str):
        sample = _open_sample(session, question)
        if kind == "input":
            return FileResponse(sample.input_path, media_type="image/png")
        if kind == "truth":
            return FileResponse(sample.truth_path, media_type="image/png")
        raise HTTPException(status_code=400, detail="kind must be input or truth")

    @app.get("/api/candidate-image")
    def api_candidate_image(session: str, question: str, id: str):
        sample = _open_sample(session, question)
        assignment = candidate_assignment(study, session, question, sample.id)
        if id not in assignment:
            raise HTTPException(status_code=404, detail="unknown candidate")
        entry = assignment[id][1]
        path = sample.truth_path if entry == TRUTH_CHOICE else sample.outputs[entry]
        return FileResponse(path, media_type="image/png")

    if images_dir:
        app.mount("/images", StaticFiles(directory=str(images_dir)), name="images")
    if frontend_dir:
        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="ui")
    return app
