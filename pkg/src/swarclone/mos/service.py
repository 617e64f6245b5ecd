"""HTTP JSON API for MOS collection.

Endpoints:
  GET  /api/pairs?token=...   randomized pair order for a session token
  GET  /api/audio/{clip_id}   WAV bytes (clip_id = "<pair_id>.orig" | "<pair_id>.clone")
  POST /api/ratings           store one rating (resubmission overwrites)
  GET  /api/aggregate         Tables-5/6-shaped aggregate

Unparseable request bodies return 400; out-of-range or missing fields 422
(with the offending field named); unknown pairs/clips 404. Rating writes
are serialized through the store's single writer; the append-only log is
replayable. When a UI bundle directory is supplied it is mounted at /.
"""
from __future__ import annotations

import hashlib
import random
import time
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .store import ClipPair, RatingRecord, RatingStore, aggregate, load_study


class RatingIn(BaseModel):
    rater_id: str = Field(min_length=1)
    pair_id: str = Field(min_length=1)
    quality: int = Field(ge=1, le=5)
    similarity: int = Field(ge=1, le=5)


def _session_order(pairs: list[ClipPair], token: str) -> list[ClipPair]:
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    seed = int.from_bytes(digest[:8], "big")
    shuffled = list(pairs)
    random.Random(seed).shuffle(shuffled)
    return shuffled


def create_app(study_path, log_path, audio_root=None, ui_dir=None) -> FastAPI:
    pairs = load_study(study_path)
    pair_index = {p.pair_id: p for p in pairs}
    store = RatingStore(log_path)
    root = Path(audio_root) if audio_root else Path(study_path).parent

    def resolve_clip(clip_id: str) -> Path:
        pair_id, _, which = clip_id.rpartition(".")
        pair = pair_index.get(pair_id)
        if pair is None or which not in ("orig", "clone"):
            raise HTTPException(status_code=404, detail=f"unknown clip {clip_id!r}")
        ref = pair.original_audio if which == "orig" else pair.cloned_audio
        path = Path(ref)
        if not path.is_absolute():
            path = root / path
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"audio file missing for {clip_id!r}")
        return path

    app = FastAPI(title="swarclone MOS service")

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        errors = exc.errors()
        if any(e.get("type") == "json_invalid" for e in errors):
            return JSONResponse(status_code=400, content={"detail": "malformed JSON body"})
        detail = [
            {
                "field": ".".join(str(part) for part in e.get("loc", []) if part != "body"),
                "message": e.get("msg", "invalid value"),
            }
            for e in errors
        ]
        return JSONResponse(status_code=422, content={"detail": detail})

    @app.get("/api/pairs")
    def list_pairs(token: str):
        ordered = _session_order(pairs, token)
        return {
            "token": token,
            "pairs": [
                {
                    "pair_id": p.pair_id,
                    "speaker_id": p.speaker_id,
                    "gender": p.gender,
                    "original_url": f"/api/audio/{p.pair_id}.orig",
                    "cloned_url": f"/api/audio/{p.pair_id}.clone",
                }
                for p in ordered
            ],
        }

    @app.get("/api/audio/{clip_id}")
    def get_audio(clip_id: str):
        return FileResponse(resolve_clip(clip_id), media_type="audio/wav")

    @app.post("/api/ratings")
    def post_rating(rating: RatingIn):
        if rating.pair_id not in pair_index:
            raise HTTPException(status_code=404, detail=f"unknown pair {rating.pair_id!r}")
        record = RatingRecord(
            rater_id=rating.rater_id,
            pair_id=rating.pair_id,
            quality=rating.quality,
            similarity=rating.similarity,
            timestamp=time.time(),
        )
        store.add(record)
        return {"status": "stored", "rater_id": record.rater_id, "pair_id": record.pair_id}

    @app.get("/api/aggregate")
    def get_aggregate():
        return aggregate(store.records(), pairs).payload

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
