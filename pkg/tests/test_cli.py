import csv
import json

import numpy as np
import pytest

from axilkit import cli
from axilkit.axil import load_state
from axilkit.io import DataError, ExplainTable, load_csv
from axilkit.trainer import load_model


def run(argv, capsys=None):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr() if capsys is not None else None
    return code, out


@pytest.fixture
def trained(tmp_path, fixture4_csv):
    model = tmp_path / "model.json"
    state = tmp_path / "state.npz"
    assert run(["train", "--data", fixture4_csv, "--target", "y", "--label-column", "label",
                "--trees", 1, "--leaves", 2, "--learning-rate", 0.5, "--out", model])[0] == 0
    assert run(["axil-fit", "--model", model, "--data", fixture4_csv, "--out", state])[0] == 0
    return model, state


class TestLoadCsv:
    def test_fixture(self, fixture4_csv):
        ds = load_csv(fixture4_csv, "y", "label")
        assert (ds.n_instances, ds.n_features) == (4, 1)
        assert ds.labels == ("a", "b", "c", "d")
        assert ds.feature_names == ("x",)
        assert ds.target.tolist() == [1, 2, 3, 4]

    def test_without_labels(self, fixture4_csv):
        ds = load_csv(fixture4_csv, "y", feature_columns=["x"])
        assert ds.labels is None
        assert ds.instance_labels() == ["0", "1", "2", "3"]

    def test_missing_target(self, fixture4_csv):
        with pytest.raises(DataError, match="'price'"):
            load_csv(fixture4_csv, "price", "label")

    def test_non_numeric(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("x,y\n1,2\nabc,3\n")
        with pytest.raises(DataError, match=r"row 3, column 'x'"):
            load_csv(p, "y")

    def test_empty(self, tmp_path):
        p = tmp_path / "empty.csv"
        p.write_text("")
        with pytest.raises(DataError, match="empty"):
            load_csv(p, "y")

    def test_ragged(self, tmp_path):
        p = tmp_path / "ragged.csv"
        p.write_text("x,y\n1,2,3\n")
        with pytest.raises(DataError, match="row 2"):
            load_csv(p, "y")

    def test_bundled_countries(self):
        ds = load_csv(cli.sample_data_path(), "smoking_rate", "country")
        assert ds.n_instances == 29 and ds.n_features == 10
        assert "Brazil" in ds.labels


class TestCommands:
    def test_train_writes_metadata(self, trained):
        model = load_model(trained[0])
        assert model.metadata == {"target": "y", "label_column": "label",
                                  "feature_names": ["x"]}

    def test_explain_fixture(self, trained, fixture4_csv, capsys):
        table = cli.cmd_explain(trained[1], fixture4_csv, "a")
        text = capsys.readouterr().out
        assert len(table.rows) == 4
        assert table.weight_sum == pytest.approx(1.0, abs=1e-12)
        assert table.prediction == pytest.approx(2.0, abs=1e-12)
        assert [r.label for r in table.rows] == ["a", "b", "c", "d"]
        assert "0.3750" in text and "0.1250" in text
        assert text.splitlines()[-2].split() == ["Sum", "1.00", "ŷ", "→", "2.00"]

    def test_explain_by_index_and_csv(self, trained, fixture4_csv, tmp_path):
        out = tmp_path / "t.csv"
        code, _ = run(["explain", "--state", trained[1], "--data", fixture4_csv,
                       "--instance", "2", "--format", "csv", "--out", out])
        assert code == 0
        rows = list(csv.reader(out.open()))
        assert rows[0] == ["label", "weight", "target", "product"]
        assert rows[-1][0] == "Sum" and float(rows[-1][3]) == pytest.approx(3.0, abs=1e-12)

    def test_explain_unknown_instance(self, trained, fixture4_csv, capsys):
        code, out = run(["explain", "--state", trained[1], "--data", fixture4_csv,
                         "--instance", "zz"], capsys)
        assert code == 2 and "zz" in out.err

    def test_transform_cluster_graph(self, trained, fixture4_csv, tmp_path, capsys):
        weights = tmp_path / "k.csv"
        assert run(["axil-transform", "--state", trained[1], "--data", fixture4_csv,
                    "--out", weights])[0] == 0
        rows = list(csv.reader(weights.open()))
        assert rows[0] == ["label", "a", "b", "c", "d"]
        assert [float(x) for x in rows[1][1:]] == pytest.approx([0.375, 0.375, 0.125, 0.125])

        labels, newick = tmp_path / "c.csv", tmp_path / "t.nwk"
        assert run(["cluster", "--weights", weights, "--k", 2, "--labels-out", labels,
                    "--newick-out", newick])[0] == 0
        assert list(csv.reader(labels.open()))[1:] == [["a", "0"], ["b", "0"],
                                                       ["c", "1"], ["d", "1"]]
        assert newick.read_text().strip().endswith(";")

        code, out = run(["graph", "--weights", weights, "--cutoff", 0.2], capsys)
        assert code == 0 and out.out.count("--") == 2
        code, out = run(["graph", "--weights", weights, "--cutoff", 0.2,
                         "--format", "graphml"], capsys)
        assert code == 0 and out.out.count("<edge ") == 2

    def test_transform_without_target_column(self, trained, tmp_path):
        new = tmp_path / "new.csv"
        new.write_text("label,x\np,1.5\nq,3.7\n")
        weights = tmp_path / "k.csv"
        assert run(["axil-transform", "--state", trained[1], "--data", new,
                    "--out", weights])[0] == 0
        rows = list(csv.reader(weights.open()))
        assert rows[0] == ["label", "p", "q"]

    def test_verify(self, trained, fixture4_csv, capsys, tmp_path):
        new = tmp_path / "new.csv"
        new.write_text("label,x\np,0.0\nq,9.0\n")
        code, out = run(["verify", "--model", trained[0], "--data", fixture4_csv,
                         "--new-data", new], capsys)
        assert code == 0
        report = json.loads(out.out)
        assert all(c["ok"] for part in report.values() for c in part.values())

    def test_verify_detects_tampering(self, trained, fixture4_csv, tmp_path, capsys):
        doc = json.loads(trained[0].read_text())
        doc["base_score"] = 2.0
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(doc))
        code, out = run(["verify", "--model", bad, "--data", fixture4_csv], capsys)
        assert code == 1
        assert "reconstruction" in out.err

    def test_state_contents(self, trained):
        state, extra = load_state(trained[1])
        assert state.p_matrices.shape == (2, 4, 4)
        assert extra["train_labels"] == ["a", "b", "c", "d"]
        assert extra["y_train"].tolist() == [1, 2, 3, 4]

    def test_bench_small(self, tmp_path, capsys):
        out = tmp_path / "bench.csv"
        code, res = run(["bench", "--sizes", "20,40", "--trees", 2, "--out", out], capsys)
        assert code == 0
        rows = list(csv.DictReader(out.open()))
        assert [int(r["n"]) for r in rows] == [20, 40]
        assert "slope" in res.err

    def test_sample_data(self, tmp_path):
        out = tmp_path / "c.csv"
        assert run(["sample-data", "--out", out])[0] == 0
        assert out.read_text() == cli.sample_data_path().read_text()


class TestExitCodes:
    def test_bad_arguments(self):
        with pytest.raises(SystemExit) as err:
            cli.main(["train", "--data", "x.csv"])
        assert err.value.code == 2

    def test_bad_sizes(self):
        with pytest.raises(SystemExit) as err:
            cli.main(["bench", "--sizes", "a,b"])
        assert err.value.code == 2

    def test_missing_column(self, fixture4_csv, tmp_path):
        assert run(["train", "--data", fixture4_csv, "--target", "nope",
                    "--out", tmp_path / "m.json"])[0] == 2

    def test_bad_hyperparameter(self, fixture4_csv, tmp_path):
        assert run(["train", "--data", fixture4_csv, "--target", "y", "--trees", 0,
                    "--out", tmp_path / "m.json"])[0] == 2

    def test_missing_file(self, tmp_path):
        assert run(["train", "--data", tmp_path / "none.csv", "--target", "y",
                    "--out", tmp_path / "m.json"])[0] == 3

    def test_unwritable_output(self, fixture4_csv, tmp_path):
        assert run(["train", "--data", fixture4_csv, "--target", "y", "--label-column", "label",
                    "--out", tmp_path / "no" / "dir" / "m.json"])[0] == 3


def test_thread_cap(monkeypatch, fixture4_csv, tmp_path):
    monkeypatch.setenv("AXIL_THREADS", "1")
    assert run(["train", "--data", fixture4_csv, "--target", "y", "--label-column", "label", "--trees", 2,
                "--out", tmp_path / "m.json"])[0] == 0


def test_explain_table_footer():
    from axilkit.axil import AxilMatrix
    K = AxilMatrix(np.array([[0.25], [0.75]]), train_labels=["p", "q"], new_labels=["s"])
    table = ExplainTable.build(K, [4.0, 8.0], 0)
    assert [r.label for r in table.rows] == ["q", "p"]
    assert table.prediction == 7.0 and table.weight_sum == 1.0
    assert table.render().startswith("AXIL weights for s")
