"""The grading service API and its append-only grade store."""

import json

import pytest
from fastapi.testclient import TestClient

from rewriteqa.errors import DatasetParseError
from rewriteqa.evaluation import (
    AnswerPrediction,
    grade_from_dict,
    human_eval_score,
)
from rewriteqa.grading import GradeStore
from rewriteqa.service.app import (
    DEFAULT_GUIDELINES,
    GradingState,
    create_grading_app,
    section_for_system,
)


def predictions_for(records, system: str, answers: dict[str, str]):
    return [
        AnswerPrediction(
            question_id=record.question_id,
            system=system,
            predicted_answer=answers.get(record.question_id, "unknown"),
            rewrite_text=f"rewrite of {record.question_id}",
        )
        for record in records
    ]


GOLD_ANSWERS = {"q-giraffe": "15 feet", "q-zebra": "leaves", "q-kite": "Benjamin Franklin"}


@pytest.fixture()
def grading_parts(paper_records, embedder, tmp_path):
    predictions = {
        "agnostic": predictions_for(paper_records, "agnostic", GOLD_ANSWERS),
        "concat": predictions_for(paper_records, "concat", {}),
    }
    store_path = tmp_path / "grades.jsonl"
    return paper_records, predictions, store_path, embedder


def build_app(grading_parts, **kwargs):
    records, predictions, store_path, embedder = grading_parts
    return create_grading_app(
        dataset=records,
        predictions=predictions,
        store=GradeStore(store_path),
        embedder=embedder,
        **kwargs,
    )


@pytest.fixture()
def client(grading_parts):
    with TestClient(build_app(grading_parts)) as test_client:
        yield test_client


def post_grade(client, question_id="q-giraffe", system="agnostic", grader="g1", verdict="correct"):
    return client.post(
        "/api/grades",
        json={
            "question_id": question_id,
            "system": system,
            "grader_id": grader,
            "verdict": verdict,
        },
    )


class TestGradeStore:
    def test_append_and_reload(self, tmp_path):
        path = tmp_path / "grades.jsonl"
        store = GradeStore(path)
        assert len(store) == 0
        record = grade_from_dict(
            {
                "question_id": "q",
                "system": "s",
                "grader_id": "g",
                "verdict": "correct",
                "timestamp": 4.0,
            }
        )
        store.add(record)
        assert store.all() == (record,)
        # A second handle sees the persisted grade.
        assert GradeStore(path).all() == (record,)

    def test_corrupt_line_is_reported_with_position(self, tmp_path):
        path = tmp_path / "grades.jsonl"
        path.write_text('{"question_id": "q"\n', encoding="utf-8")
        with pytest.raises(DatasetParseError) as err:
            GradeStore(path)
        assert err.value.line_number == 1

    def test_latest_collapses_revisions(self, tmp_path):
        store = GradeStore(tmp_path / "grades.jsonl")
        base = {"question_id": "q", "system": "s", "grader_id": "g"}
        store.add(grade_from_dict({**base, "verdict": "correct", "timestamp": 1.0}))
        store.add(grade_from_dict({**base, "verdict": "incorrect", "timestamp": 2.0}))
        latest = store.latest()
        assert latest[("q", "s", "g")].verdict == "incorrect"
        assert len(store.all()) == 2


class TestGradingState:
    def test_requires_predictions(self, paper_records, embedder, tmp_path):
        with pytest.raises(ValueError):
            GradingState(
                dataset=paper_records,
                predictions={},
                store=GradeStore(tmp_path / "g.jsonl"),
                embedder=embedder,
            )

    def test_serves_only_shared_questions(self, paper_records, embedder, tmp_path, caplog):
        predictions = {
            "full": predictions_for(paper_records, "full", GOLD_ANSWERS),
            "partial": predictions_for(paper_records[:2], "partial", GOLD_ANSWERS),
        }
        with caplog.at_level("WARNING"):
            state = GradingState(
                dataset=paper_records,
                predictions=predictions,
                store=GradeStore(tmp_path / "g.jsonl"),
                embedder=embedder,
            )
        assert len(state.examples) == 2
        assert "not served" in caplog.text

    def test_no_overlap_rejected(self, paper_records, embedder, tmp_path):
        predictions = {
            "a": predictions_for(paper_records[:1], "a", GOLD_ANSWERS),
            "b": predictions_for(paper_records[2:], "b", GOLD_ANSWERS),
        }
        with pytest.raises(ValueError):
            GradingState(
                dataset=paper_records,
                predictions=predictions,
                store=GradeStore(tmp_path / "g.jsonl"),
                embedder=embedder,
            )

    def test_section_aliases(self):
        assert section_for_system("agnostic") == "Our Methods"
        assert section_for_system("concat") == "Baselines"
        assert section_for_system("MUTAN") == "VQA Models"
        assert section_for_system("anything-else") == "Our Methods"


class TestExampleEndpoints:
    def test_list_examples(self, client):
        body = client.get("/api/examples").json()
        assert [e["question_id"] for e in body] == ["q-giraffe", "q-zebra", "q-kite"]
        assert body[0]["systems"] == ["agnostic", "concat"]
        assert body[0]["gold_answers"] == ["15 feet"]

    def test_example_detail(self, client):
        body = client.get("/api/examples/q-zebra").json()
        assert body["image_url"] == "/api/images/img-zebra"
        answers = {a["system"]: a for a in body["answers"]}
        assert answers["agnostic"]["predicted_answer"] == "leaves"
        assert answers["concat"]["predicted_answer"] == "unknown"
        assert answers["agnostic"]["rewrite_text"] == "rewrite of q-zebra"

    def test_unknown_example_404(self, client):
        assert client.get("/api/examples/q-missing").status_code == 404

    def test_image_placeholder(self, client):
        response = client.get("/api/images/img-zebra")
        assert response.status_code == 200
        assert response.headers["content-type"].startswith("image/svg+xml")
        assert "img-zebra" in response.text

    def test_image_file_served(self, grading_parts, tmp_path):
        images = tmp_path / "images"
        images.mkdir()
        payload = b"\x89PNG fake bytes"
        (images / "img-zebra.png").write_bytes(payload)
        with TestClient(build_app(grading_parts, images_dir=images)) as client:
            response = client.get("/api/images/img-zebra")
            assert response.status_code == 200
            assert response.headers["content-type"] == "image/png"
            assert response.content == payload
            # Unmatched ids still fall back to the placeholder.
            assert "image/svg+xml" in client.get("/api/images/other").headers["content-type"]


class TestGradeEndpoints:
    def test_post_get_round_trip(self, client):
        posted = post_grade(client)
        assert posted.status_code == 200
        body = posted.json()
        assert body["verdict"] == "correct"
        assert body["timestamp"] > 0
        listed = client.get("/api/grades").json()
        assert len(listed) == 1
        assert listed[0]["question_id"] == "q-giraffe"
        assert listed[0]["timestamp"] == body["timestamp"]

    def test_revision_shows_latest_only(self, client):
        post_grade(client, verdict="correct")
        post_grade(client, verdict="incorrect")
        listed = client.get("/api/grades").json()
        assert len(listed) == 1
        assert listed[0]["verdict"] == "incorrect"

    def test_filters(self, client):
        post_grade(client, grader="g1")
        post_grade(client, question_id="q-zebra", grader="g2")
        assert len(client.get("/api/grades", params={"grader_id": "g1"}).json()) == 1
        assert len(client.get("/api/grades", params={"question_id": "q-zebra"}).json()) == 1

    def test_unknown_question_or_system_404(self, client):
        assert post_grade(client, question_id="q-missing").status_code == 404
        assert post_grade(client, system="mystery").status_code == 404

    def test_malformed_body_400(self, client):
        response = client.post("/api/grades", json={"question_id": "q-giraffe"})
        assert response.status_code == 400
        response = client.post(
            "/api/grades",
            json={
                "question_id": "q-giraffe",
                "system": "agnostic",
                "grader_id": "g1",
                "verdict": "maybe",
            },
        )
        assert response.status_code == 400
        assert client.post(
            "/api/grades", content=b"not json", headers={"content-type": "application/json"}
        ).status_code == 400

    def test_grades_survive_restart(self, grading_parts):
        with TestClient(build_app(grading_parts)) as first:
            post_grade(first)
            post_grade(first, question_id="q-zebra", verdict="incorrect")
        with TestClient(build_app(grading_parts)) as second:
            listed = second.get("/api/grades").json()
        assert len(listed) == 2


class TestProgress:
    def test_counts(self, client):
        empty = client.get("/api/progress").json()
        assert empty["total_examples"] == 3
        assert empty["total_pairs"] == 6
        assert empty["graded_pairs"] == 0
        post_grade(client)
        post_grade(client, system="concat")
        post_grade(client, question_id="q-zebra")
        progress = client.get("/api/progress").json()
        assert progress["graded_pairs"] == 3
        assert progress["per_system"] == {"agnostic": 2, "concat": 1}
        assert progress["fully_graded_examples"] == 1

    def test_grader_filter(self, client):
        post_grade(client, grader="g1")
        post_grade(client, grader="g2", question_id="q-zebra")
        mine = client.get("/api/progress", params={"grader_id": "g1"}).json()
        assert mine["graded_pairs"] == 1
        assert mine["grader_id"] == "g1"

    def test_revision_counts_once(self, client):
        post_grade(client, verdict="correct")
        post_grade(client, verdict="incorrect")
        assert client.get("/api/progress").json()["graded_pairs"] == 1


class TestReport:
    def test_he_matches_reference_recomputation(self, grading_parts):
        records, predictions, store_path, embedder = grading_parts
        with TestClient(build_app(grading_parts)) as client:
            post_grade(client, question_id="q-giraffe", verdict="correct")
            post_grade(client, question_id="q-zebra", verdict="correct", grader="g2")
            post_grade(client, question_id="q-zebra", verdict="incorrect", grader="g3")
            body = client.get("/api/report").json()
        expected = human_eval_score(GradeStore(store_path).all(), "agnostic")
        rows = {row["system"]: row for row in body["rows"]}
        assert rows["agnostic"]["he"] == pytest.approx(expected)
        assert expected == pytest.approx((1.0 + 0.5) / 2)

    def test_em_bs_and_published_rows(self, client):
        body = client.get("/api/report").json()
        rows = {row["system"]: row for row in body["rows"]}
        assert rows["agnostic"]["em"] == 1.0
        assert rows["agnostic"]["bs"] == pytest.approx(1.0)
        assert rows["concat"]["em"] == 0.0
        assert rows["agnostic"]["he"] is None
        assert "MUTAN" in rows
        assert "[VQA Models]" in body["text"]

    def test_report_reflects_new_grades_immediately(self, client):
        before = client.get("/api/report").json()
        post_grade(client)
        after = client.get("/api/report").json()
        rows_before = {r["system"]: r for r in before["rows"]}
        rows_after = {r["system"]: r for r in after["rows"]}
        assert rows_before["agnostic"]["he"] is None
        assert rows_after["agnostic"]["he"] == 1.0


class TestGuidelinesAndStatic:
    def test_default_guidelines_served(self, client):
        body = client.get("/api/guidelines").json()
        assert body["text"] == DEFAULT_GUIDELINES
        assert "19th century for 1890" in body["text"]

    def test_custom_guidelines(self, grading_parts):
        with TestClient(build_app(grading_parts, guidelines_text="house rules")) as client:
            assert client.get("/api/guidelines").json()["text"] == "house rules"

    def test_static_dir_mounted_after_api(self, grading_parts, tmp_path):
        static = tmp_path / "dist"
        static.mkdir()
        (static / "index.html").write_text("<html><body>grader</body></html>")
        with TestClient(build_app(grading_parts, static_dir=static)) as client:
            page = client.get("/")
            assert page.status_code == 200
            assert "grader" in page.text
            # API routes still win over the static mount.
            assert client.get("/api/examples").status_code == 200
