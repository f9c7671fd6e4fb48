import io
import json
import socket
import threading

from victim_adapter.adapter import AdapterConfig, serve, serve_streams
from victim_adapter.toy_model import load


def run_lines(lines: list[str]) -> list[str]:
    out = io.StringIO()
    serve_streams(load(None), "probabilities", io.StringIO("\n".join(lines) + "\n"), out)
    return out.getvalue().splitlines()


GOOD = json.dumps({"id": 1, "graph": {"num_nodes": 2, "edges": [[0, 1]],
                                      "node_labels": [0, 1]}})


class TestServeStreams:
    def test_replies_echo_id(self):
        replies = run_lines([GOOD])
        obj = json.loads(replies[0])
        assert obj["id"] == 1 and "scores" in obj

    def test_malformed_line_gets_error_and_loop_continues(self):
        next_req = json.dumps({"id": 7, "graph": {"num_nodes": 1, "edges": [],
                                                  "node_labels": [0]}})
        replies = run_lines(["{broken json", GOOD, next_req])
        first = json.loads(replies[0])
        assert "error" in first and first["id"] is None
        assert json.loads(replies[1])["id"] == 1
        assert json.loads(replies[2])["id"] == 7

    def test_bad_graph_echoes_request_id(self):
        bad = json.dumps({"id": 9, "graph": {"num_nodes": 2, "edges": [[0, 9]]}})
        obj = json.loads(run_lines([bad])[0])
        assert obj["id"] == 9 and "error" in obj

    def test_missing_graph_is_an_error(self):
        obj = json.loads(run_lines([json.dumps({"id": 3})])[0])
        assert obj["id"] == 3 and "error" in obj

    def test_logits_interpretation_softmaxes(self):
        out = io.StringIO()
        serve_streams(lambda inputs: [0.0, 0.0], "logits",
                      io.StringIO(GOOD + "\n"), out)
        obj = json.loads(out.getvalue())
        assert obj["scores"] == [0.5, 0.5]

    def test_blank_lines_ignored(self):
        replies = run_lines(["", GOOD, ""])
        assert len(replies) == 1


class TestTcpMode:
    def test_single_connection_round_trip(self):
        with socket.socket() as probe:
            probe.bind(("127.0.0.1", 0))
            port = probe.getsockname()[1]
        cfg = AdapterConfig(loader="victim_adapter.toy_model:load", tcp_port=port)
        server = threading.Thread(target=serve, args=(cfg,),
                                  kwargs={"max_connections": 1}, daemon=True)
        server.start()
        for _ in range(50):
            try:
                conn = socket.create_connection(("127.0.0.1", port), timeout=5)
                break
            except ConnectionRefusedError:
                import time
                time.sleep(0.05)
        with conn, conn.makefile("rw", encoding="utf-8") as stream:
            stream.write(GOOD + "\n")
            stream.flush()
            reply = json.loads(stream.readline())
            assert reply["id"] == 1 and "scores" in reply
        server.join(timeout=10)
