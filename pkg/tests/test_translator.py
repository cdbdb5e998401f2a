from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from ibtforge.corpus import MonoSample, ParallelSample, TestCase
from ibtforge.translator import (
    BACKWARD,
    BackendProtocolError,
    BackendUnavailable,
    Candidate,
    FORWARD,
    LineBeam,
    RemoteBackend,
    TemplateBackend,
    TrainingRejected,
    TranslationRequest,
    build_beam,
    expand_workers,
)

NEG_INF = float("-inf")


def make_pair_sample(sample_id, worker, code_lines, pseudo_lines, language="cpp"):
    return ParallelSample(
        id=sample_id,
        language=language,
        worker=worker,
        code_lines=code_lines,
        pseudo_lines=pseudo_lines,
        preprocessed=True,
    )


@pytest.fixture
def trained_backend():
    backend = TemplateBackend()
    sample = make_pair_sample(
        "s:1:1",
        1,
        ["cout << x ;", "x = 1 ;", "return 0 ;"],
        ["print x", "set x to 1", "return 0"],
    )
    backend.fine_tune([sample], FORWARD, {})
    backend.fine_tune([sample], BACKWARD, {})
    return backend


class TestBeamConstruction:
    def test_ordering_and_dedupe(self):
        beam = build_beam(
            "src",
            [
                Candidate("b", 1.0),
                Candidate("a", 1.0),
                Candidate("a", 0.5),
                Candidate("c", 2.0),
            ],
            beam_size=10,
        )
        assert [c.text for c in beam.candidates] == ["c", "a", "b"]

    def test_truncation(self):
        beam = build_beam("src", [Candidate(str(i), -float(i)) for i in range(5)], beam_size=2)
        assert len(beam.candidates) == 2

    def test_empty_beam_rejected(self):
        with pytest.raises(ValueError):
            LineBeam(source="s", candidates=())


class TestBaselineTranslate:
    def test_template_substitution_forward(self, trained_backend):
        beams = trained_backend.translate(TranslationRequest(FORWARD, ("cout << n ;",), 5))
        assert beams[0].top.text == "print n"

    def test_learned_slot_template(self, trained_backend):
        beams = trained_backend.translate(TranslationRequest(FORWARD, ("y = 2 ;",), 5))
        assert beams[0].top.text == "set y to 2"

    def test_backward_direction(self, trained_backend):
        beams = trained_backend.translate(TranslationRequest(BACKWARD, ("set total to 9",), 5))
        assert beams[0].top.text == "total = 9 ;"

    def test_beam_size_one_caps(self, trained_backend):
        beams = trained_backend.translate(TranslationRequest(FORWARD, ("x = 1 ;",), 1))
        assert len(beams[0].candidates) == 1

    def test_unknown_line_echoes(self, trained_backend):
        beams = trained_backend.translate(TranslationRequest(FORWARD, ("goto fail ;",), 5))
        assert beams[0].candidates == (Candidate("goto fail ;", NEG_INF),)

    def test_slot_type_mismatch_rejected(self, trained_backend):
        # the assignment template pairs an identifier with a number literal
        beams = trained_backend.translate(TranslationRequest(FORWARD, ("y = z ;",), 5))
        assert beams[0].top.score == NEG_INF

    def test_order_and_source_preserved(self, trained_backend):
        lines = ("x = 1 ;", "cout << q ;", "unknown ;")
        beams = trained_backend.translate(TranslationRequest(FORWARD, lines, 3))
        assert [b.source for b in beams] == list(lines)

    def test_determinism_bitwise(self, trained_backend):
        req = TranslationRequest(FORWARD, ("x = 1 ;", "cout << q ;"), 4)
        assert trained_backend.translate(req) == trained_backend.translate(req)

    def test_exact_reproduction_of_training_pairs(self, trained_backend):
        beams = trained_backend.translate(
            TranslationRequest(FORWARD, ("cout << x ;", "x = 1 ;", "return 0 ;"), 3)
        )
        assert [b.top.text for b in beams] == ["print x", "set x to 1", "return 0"]

    def test_no_duplicate_texts(self, trained_backend):
        for beams in (
            trained_backend.translate(TranslationRequest(FORWARD, ("x = 1 ;",), 10)),
            trained_backend.translate(TranslationRequest(BACKWARD, ("print k",), 10)),
        ):
            texts = [c.text for c in beams[0].candidates]
            assert len(texts) == len(set(texts))


class TestBaselineFineTune:
    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            TemplateBackend().fine_tune([], FORWARD, {})

    def test_duplicate_pairs_idempotent(self):
        backend = TemplateBackend()
        sample = make_pair_sample("s:1:1", 1, ["x = 1 ;"], ["set x to 1"])
        backend.fine_tune([sample], FORWARD, {})
        size = backend.table_size(FORWARD)
        backend.fine_tune([sample], FORWARD, {})
        assert backend.table_size(FORWARD) == size

    def test_later_entry_shadows_same_source_shape(self):
        backend = TemplateBackend()
        first = make_pair_sample("s:1:1", 1, ["cout << x ;"], ["print x"])
        second = make_pair_sample("s:2:1", 1, ['printf ( " %d " , x ) ;'], ["print x"])
        backend.fine_tune([first, second], BACKWARD, {})
        beams = backend.translate(TranslationRequest(BACKWARD, ("print n",), 5))
        assert beams[0].top.text == 'printf ( " %d " , n ) ;'
        assert len(beams[0].candidates) == 1

    def test_worker_prefix_conditions_templates(self):
        backend = TemplateBackend()
        sample = make_pair_sample("s:1:1", 4, ["x = 1 ;"], ["set x to 1"])
        backend.fine_tune([sample], FORWARD, {"worker_prefix": True})
        hit = backend.translate(TranslationRequest(FORWARD, ("<w:4> y = 2 ;",), 1))
        miss = backend.translate(TranslationRequest(FORWARD, ("<w:5> y = 2 ;",), 1))
        assert hit[0].top.text == "set y to 2"
        assert miss[0].top.score == NEG_INF

    def test_cold_start_clears_table(self):
        backend = TemplateBackend()
        backend.fine_tune(
            [make_pair_sample("s:1:1", 1, ["x = 1 ;"], ["set x to 1"])], FORWARD, {}
        )
        backend.fine_tune(
            [make_pair_sample("s:2:1", 1, ["cout << x ;"], ["print x"])],
            FORWARD,
            {"warm_start": False},
        )
        beams = backend.translate(TranslationRequest(FORWARD, ("y = 2 ;",), 1))
        assert beams[0].top.score == NEG_INF

    def test_state_round_trip(self, trained_backend, tmp_path):
        path = tmp_path / "table.jsonl"
        trained_backend.save_state(path)
        restored = TemplateBackend()
        restored.load_state(path)
        req = TranslationRequest(FORWARD, ("x = 1 ;", "cout << y ;"), 5)
        assert restored.translate(req) == trained_backend.translate(req)


class TestExpandWorkers:
    def _mono(self, n_lines=3):
        lines = ["int main ( ) {", "x = 1 ;", "}"][:n_lines]
        return MonoSample(
            id="y:1",
            code_lines=lines,
            tests=[TestCase(b"", b"")],
        )

    def test_variant_shapes(self):
        backend = TemplateBackend()
        sample = make_pair_sample(
            "s:1:1", 1, ["int main ( ) {", "x = 1 ;", "}"], ["begin", "set x to 1", "end"]
        )
        backend.fine_tune([sample], FORWARD, {"worker_prefix": True})
        variants = expand_workers(self._mono(), [1, 2], backend)
        assert len(variants) == 2
        assert all(len(pseudo) == 3 for _, pseudo in variants)
        # known worker gets real translations, unknown worker echoes
        assert variants[0][1][1] == "set x to 1"
        assert variants[1][1][1] == "x = 1 ;"

    def test_ten_workers_ten_variants(self):
        backend = TemplateBackend()
        backend.fine_tune(
            [make_pair_sample("s:1:1", 1, ["x = 1 ;"], ["set x to 1"])],
            FORWARD,
            {},
        )
        sample = MonoSample(id="y:2", code_lines=["x = 1 ;"], tests=[TestCase(b"", b"")])
        variants = expand_workers(sample, list(range(1, 11)), backend)
        assert len(variants) == 10

    def test_failing_variant_dropped(self):
        class FlakyBackend(TemplateBackend):
            def translate(self, req):
                if any("<w:2>" in line for line in req.lines):
                    raise BackendUnavailable("worker 2 is cursed")
                return super().translate(req)

        variants = expand_workers(self._mono(), [1, 2, 3], FlakyBackend())
        assert [w for w, _ in variants] == [1, 3]

    def test_empty_worker_list_rejected(self):
        with pytest.raises(ValueError):
            expand_workers(self._mono(), [], TemplateBackend())


# ---------------------------------------------------------------------------
# Remote backend against an in-process protocol server


class _StubState:
    def __init__(self):
        self.fail_translates = 0  # respond 500 this many times first
        self.requests: list[tuple[str, str, dict | None]] = []
        self.status_sequence = ["running", "completed"]
        self.reject_finetune = False
        self.bad_payload = False


class _Handler(BaseHTTPRequestHandler):
    state: _StubState

    def log_message(self, *args):  # noqa: D102 - silence the test server
        pass

    def _send(self, code, payload):
        body = json.dumps(payload).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _read_json(self):
        length = int(self.headers.get("Content-Length", 0))
        return json.loads(self.rfile.read(length)) if length else None

    def do_POST(self):
        body = self._read_json()
        self.state.requests.append(("POST", self.path, body))
        if self.path == "/translate":
            if self.state.fail_translates > 0:
                self.state.fail_translates -= 1
                self._send(503, {"error": "warming up"})
                return
            if self.state.bad_payload:
                self._send(200, {"nope": True})
                return
            beams = []
            for line in body["lines"]:
                if line == "FAIL":
                    beams.append({"source": line, "error": "boom", "candidates": []})
                else:
                    beams.append(
                        {
                            "source": line,
                            "candidates": [
                                {"text": f"{line} prime", "score": -0.1},
                                {"text": "x=1;", "score": -0.9},
                            ][: body["beam_size"]],
                        }
                    )
            self._send(200, {"beams": beams})
        elif self.path == "/finetune":
            if self.state.reject_finetune:
                self._send(422, {"error": "bad dataset"})
                return
            self._send(200, {"handle": "job-1"})
        else:
            self._send(404, {"error": "no such endpoint"})

    def do_GET(self):
        self.state.requests.append(("GET", self.path, None))
        if self.path.startswith("/status/"):
            state = (
                self.state.status_sequence.pop(0)
                if self.state.status_sequence
                else "completed"
            )
            self._send(200, {"handle": self.path.rsplit("/", 1)[-1], "state": state})
        else:
            self._send(404, {"error": "no such endpoint"})


@pytest.fixture
def stub_server():
    state = _StubState()
    handler = type("BoundHandler", (_Handler,), {"state": state})
    server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://127.0.0.1:{server.server_port}", state
    finally:
        server.shutdown()
        server.server_close()


def _fast_backend(url):
    return RemoteBackend(url, timeout_s=5.0, retry_delays=(0.01, 0.01, 0.01))


class TestRemoteBackend:
    def test_translate_round_trip(self, stub_server):
        url, state = stub_server
        backend = _fast_backend(url)
        beams = backend.translate(TranslationRequest(FORWARD, ("a", "b"), 2))
        assert [b.source for b in beams] == ["a", "b"]
        assert beams[0].top.text == "a prime"
        assert state.requests[0][1] == "/translate"

    def test_backward_candidates_canonicalized(self, stub_server):
        url, _ = stub_server
        backend = _fast_backend(url)
        beams = backend.translate(TranslationRequest(BACKWARD, ("set x",), 5))
        assert "x = 1 ;" in [c.text for c in beams[0].candidates]

    def test_retry_then_success(self, stub_server):
        url, state = stub_server
        state.fail_translates = 2
        backend = _fast_backend(url)
        beams = backend.translate(TranslationRequest(FORWARD, ("a",), 1))
        assert beams[0].top.text == "a prime"
        assert len([r for r in state.requests if r[1] == "/translate"]) == 3

    def test_unavailable_after_retries(self, stub_server):
        url, state = stub_server
        state.fail_translates = 99
        backend = _fast_backend(url)
        with pytest.raises(BackendUnavailable):
            backend.translate(TranslationRequest(FORWARD, ("a",), 1))
        assert len(state.requests) == 3

    def test_unreachable_host(self):
        backend = RemoteBackend("http://127.0.0.1:1", retry_delays=(0.01, 0.01))
        with pytest.raises(BackendUnavailable):
            backend.translate(TranslationRequest(FORWARD, ("a",), 1))

    def test_protocol_error_on_bad_schema(self, stub_server):
        url, state = stub_server
        state.bad_payload = True
        with pytest.raises(BackendProtocolError):
            _fast_backend(url).translate(TranslationRequest(FORWARD, ("a",), 1))

    def test_protocol_error_on_unknown_endpoint(self, stub_server):
        url, _ = stub_server
        with pytest.raises(BackendProtocolError):
            _fast_backend(url)._request("POST", "/bogus", {})

    def test_per_line_failure_echoes(self, stub_server):
        url, _ = stub_server
        beams = _fast_backend(url).translate(TranslationRequest(FORWARD, ("ok", "FAIL"), 2))
        assert beams[1].candidates == (Candidate("FAIL", NEG_INF),)

    def test_fine_tune_polls_to_completion(self, stub_server):
        url, state = stub_server
        backend = _fast_backend(url)
        sample = make_pair_sample("s:1:1", 1, ["x = 1 ;"], ["set x to 1"])
        handle = backend.fine_tune([sample], FORWARD, {"learning_rate": 5e-6, "epochs": 25})
        assert handle.wait(timeout_s=5, poll_s=0.01) == "completed"
        sent = next(r for r in state.requests if r[1] == "/finetune")
        assert sent[2]["config"]["learning_rate"] == 5e-6
        assert sent[2]["dataset"][0]["id"] == "s:1:1"

    def test_training_rejected(self, stub_server):
        url, state = stub_server
        state.reject_finetune = True
        sample = make_pair_sample("s:1:1", 1, ["x = 1 ;"], ["set x to 1"])
        with pytest.raises(TrainingRejected):
            _fast_backend(url).fine_tune([sample], FORWARD, {})
