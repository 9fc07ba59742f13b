import re

import pytest

from compgrad.plot import PlotError, build_series, emit_plot, read_table


@pytest.fixture
def landscape_csv(tmp_path):
    rows = ["theta,estimator,sqrt_error,alpha_mean"]
    for est in ("zeroth", "first", "ivw", "ddcg"):
        for i, th in enumerate((0.0, 0.5, 1.0)):
            rows.append(f"{th},{est},{0.1 * (i + 1)},{0.25 * i}")
    path = tmp_path / "landscape.csv"
    path.write_text("\n".join(rows) + "\n")
    return path


class TestPlot:
    def test_one_path_per_estimator(self, landscape_csv, tmp_path):
        out = emit_plot(landscape_csv, "sqrt_error", tmp_path / "a.svg")
        svg = out.read_text()
        assert svg.count("<path") == 4
        assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")

    def test_trials_averaged(self, tmp_path):
        path = tmp_path / "o.csv"
        path.write_text("estimator,trial,iteration,cost\nfirst,0,0,1.0\nfirst,1,0,3.0\nfirst,0,1,0.5\nfirst,1,1,0.5\n")
        _, series = build_series(*read_table(path), "cost")
        assert series == {"first": [(0.0, 2.0), (1.0, 0.5)]}

    def test_sweep_parameter_in_label(self, tmp_path):
        path = tmp_path / "c.csv"
        path.write_text("theta,estimator,c,alpha_mean\n0,ddcg,0.1,0.2\n0,ddcg,0.5,0.4\n1,ddcg,0.1,0.3\n1,ddcg,0.5,0.5\n")
        _, series = build_series(*read_table(path), "alpha_mean")
        assert set(series) == {"ddcg c=0.1", "ddcg c=0.5"}

    def test_alpha_axis_fixed(self, landscape_csv, tmp_path):
        svg = emit_plot(landscape_csv, "alpha_mean", tmp_path / "b.svg").read_text()
        labels = re.findall(r'text-anchor="end">([^<]+)<', svg)
        assert labels[0] == "0" and labels[-1] == "1"

    def test_no_rows(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("theta,estimator,sqrt_error\n")
        with pytest.raises(PlotError, match="no data rows"):
            emit_plot(path, "sqrt_error", tmp_path / "x.svg")

    def test_missing_column(self, landscape_csv, tmp_path):
        with pytest.raises(PlotError, match="missing column"):
            emit_plot(landscape_csv, "variance", tmp_path / "x.svg")
