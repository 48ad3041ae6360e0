import subprocess
import sys

import pytest

from plotkit import FigureSpec, SchemaError, build_figure, render
from plotkit.cli import main


def write_ufunc(path):
    rows = ["x,U"] + [f"{x/10},{(x/10)**2}" for x in range(-40, 41)]
    path.write_text("\n".join(rows) + "\n")


def write_trace(path, tag_value=1.0):
    lines = ["run_id,seed,t,theta_sq,delta_sq_mean,phi_hat,upsilon_hat,eps_hat,"
             "gap_mean,U_bar,sfo_calls"]
    for rep in range(3):
        for t in (10, 20, 30):
            lines.append(f"rep{rep},{rep},{t},{tag_value / t},0,0,0,0,1,0,{6 * t}")
    path.write_text("\n".join(lines) + "\n")


def write_trajectory(path):
    lines = ["run_id,seed,t,node,coord,value"]
    for rep in range(2):
        for node in range(3):
            for t in (10, 20, 30):
                lines.append(f"rep{rep},{rep},{t},{node},0,{0.1 * node + 0.01 * t}")
    path.write_text("\n".join(lines) + "\n")


def test_objective_curve_renders(tmp_path):
    write_ufunc(tmp_path / "ufunc.csv")
    out = render(FigureSpec((str(tmp_path / "ufunc.csv"),), "objective-curve",
                            str(tmp_path / "fig.png")))
    assert out.stat().st_size > 1000


def test_residual_plot_has_one_labeled_series_per_input(tmp_path):
    a, b = tmp_path / "trace_topology=complete.csv", tmp_path / "trace_topology=tree.csv"
    write_trace(a, 1.0)
    write_trace(b, 4.0)
    spec = FigureSpec((str(a), str(b)), "residual-vs-iteration", str(tmp_path / "f.png"))
    fig = build_figure(spec)
    labels = [t.get_text() for t in fig.axes[0].get_legend().get_texts()]
    assert labels == ["complete", "tree"]
    assert fig.axes[0].get_yscale() == "log"


def test_trajectories_and_bounds(tmp_path):
    traj = tmp_path / "trajectory.csv"
    write_trajectory(traj)
    spec = FigureSpec((str(traj),), "constrained-trajectories",
                      str(tmp_path / "f.png"), bound=2.25)
    fig = build_figure(spec)
    ys = sorted(line.get_ydata()[0] for line in fig.axes[0].get_lines()
                if len(set(line.get_ydata())) == 1)
    assert ys[0] == -2.25 and ys[-1] == 2.25
    out = render(spec)
    assert out.stat().st_size > 1000


def test_missing_column_is_named(tmp_path):
    bad = tmp_path / "trace.csv"
    bad.write_text("run_id,seed,t\nrep0,0,1\n")
    with pytest.raises(SchemaError, match="theta_sq"):
        build_figure(FigureSpec((str(bad),), "residual-vs-iteration",
                                str(tmp_path / "f.png")))


def test_rendering_is_byte_stable(tmp_path):
    write_ufunc(tmp_path / "ufunc.csv")
    p1 = render(FigureSpec((str(tmp_path / "ufunc.csv"),), "objective-curve",
                           str(tmp_path / "a.png")))
    p2 = render(FigureSpec((str(tmp_path / "ufunc.csv"),), "objective-curve",
                           str(tmp_path / "b.png")))
    assert p1.read_bytes() == p2.read_bytes()


def test_cli_roundtrip_and_errors(tmp_path):
    write_ufunc(tmp_path / "ufunc.csv")
    out = tmp_path / "fig.png"
    assert main(["--kind", "objective-curve", "--in", str(tmp_path / "ufunc.csv"),
                 "--out", str(out)]) == 0
    assert out.exists()
    assert main(["--kind", "objective-curve", "--in", str(tmp_path / "nope.csv"),
                 "--out", str(out)]) == 2


@pytest.fixture(scope="session")
def preset_outputs(tmp_path_factory):
    """Real outputs produced through the experiment CLI, the only interface."""
    base = tmp_path_factory.mktemp("presets")
    for name in ("fig1", "fig2", "fig3", "fig4"):
        res = subprocess.run(
            [sys.executable, "-m", "dmssca.cli", "preset", "--name", name,
             "--out", str(base / name)],
            capture_output=True, text=True,
        )
        assert res.returncode == 0, res.stderr
    return base


def test_all_four_kinds_render_from_preset_outputs(preset_outputs, tmp_path):
    jobs = [
        ("objective-curve", (preset_outputs / "fig4" / "ufunc.csv",), "fig4.png"),
        ("residual-vs-iteration",
         (preset_outputs / "fig3" / "trace_topology=complete.csv",
          preset_outputs / "fig3" / "trace_topology=tree.csv"), "fig3.png"),
        ("trajectories", (preset_outputs / "fig1" / "trajectory.csv",), "fig1.png"),
        ("constrained-trajectories", (preset_outputs / "fig2" / "trajectory.csv",),
         "fig2.png"),
    ]
    for kind, inputs, outname in jobs:
        spec = FigureSpec(tuple(map(str, inputs)), kind, str(tmp_path / outname))
        out = render(spec)
        assert out.stat().st_size > 1000, f"{kind} produced an empty image"


def test_fig3_from_presets_has_exactly_two_labeled_series(preset_outputs, tmp_path):
    spec = FigureSpec(
        (str(preset_outputs / "fig3" / "trace_topology=complete.csv"),
         str(preset_outputs / "fig3" / "trace_topology=tree.csv")),
        "residual-vs-iteration", str(tmp_path / "f3.png"),
    )
    fig = build_figure(spec)
    labels = [t.get_text() for t in fig.axes[0].get_legend().get_texts()]
    assert sorted(labels) == ["complete", "tree"]
