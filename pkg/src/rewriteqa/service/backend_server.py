"""Serve any set of backends over the one-endpoint-per-port wire protocol.

This is the counterpart of the remote adapters: point their endpoints at
this app and the pipeline runs against backends living in another process.
"""

from __future__ import annotations

import threading

from fastapi import FastAPI, HTTPException

from ..errors import BackendError, InvalidInputError, VocabularyError
from ..ports import (
    AnswerEmbedder,
    GenerationRequest,
    LanguageModelScorer,
    Seq2SeqRewriter,
    TextQA,
    TrainableRewriter,
    WeightedCandidate,
)
from .models import (
    AnswerIn,
    AnswerOut,
    EmbedIn,
    EmbedOut,
    GenerateIn,
    GenerateOut,
    ScoreIn,
    ScoreOut,
    UpdateIn,
    UpdateOut,
)


def create_backend_app(
    scorer: LanguageModelScorer | None = None,
    qa: TextQA | None = None,
    embedder: AnswerEmbedder | None = None,
    rewriter: Seq2SeqRewriter | None = None,
) -> FastAPI:
    app = FastAPI(title="rewriteqa backend server")
    update_lock = threading.Lock()

    def _require(backend, name: str):
        if backend is None:
            raise HTTPException(status_code=404, detail=f"no {name} backend is served")
        return backend

    def _guard(call):
        try:
            return call()
        except (InvalidInputError, VocabularyError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except BackendError as exc:
            raise HTTPException(status_code=502, detail=str(exc)) from exc

    @app.post("/score", response_model=ScoreOut)
    def score(body: ScoreIn):
        backend = _require(scorer, "scorer")
        result = _guard(lambda: backend.score_sequence(body.text))
        return ScoreOut(total_logprob=result.total_logprob, token_count=result.token_count)

    @app.post("/answer", response_model=AnswerOut)
    def answer(body: AnswerIn):
        backend = _require(qa, "qa")
        return AnswerOut(answer=_guard(lambda: backend.answer(body.question)))

    @app.post("/embed", response_model=EmbedOut)
    def embed(body: EmbedIn):
        backend = _require(embedder, "embedder")
        vector = _guard(lambda: backend.embed(body.text))
        return EmbedOut(vector=[float(x) for x in vector])

    @app.post("/generate", response_model=GenerateOut)
    def generate(body: GenerateIn):
        backend = _require(rewriter, "rewriter")
        request = _guard(
            lambda: GenerationRequest(
                input_text=body.input, k=body.k, beam_width=body.beam_width, seed=body.seed
            )
        )
        return GenerateOut(candidates=_guard(lambda: backend.generate(request)))

    @app.post("/update", response_model=UpdateOut)
    def update(body: UpdateIn):
        backend = _require(rewriter, "rewriter")
        if not isinstance(backend, TrainableRewriter):
            raise HTTPException(status_code=400, detail="served rewriter is not trainable")
        candidates = _guard(
            lambda: [WeightedCandidate(text=c.text, weight=c.weight) for c in body.candidates]
        )
        # updates mutate parameters; serialize them
        with update_lock:
            loss = _guard(lambda: backend.update(body.input, candidates))
        return UpdateOut(loss=float(loss))

    return app
