"""Figure recipes: the solver and analysis invocations whose CSV outputs hold each figure's data."""

from __future__ import annotations

from pathlib import Path

FIGURES = ("fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9")

G_UV = "0,0.5,1,1.5,2,2.5,3,3.5"
G_IR = "-0.5,-1,-2,-3"
G_BULK = "-0.375,-0.25,-0.125,0,0.125,0.25"


def _dam(root):
    return ["dam", "run", "--preset", "dam-accept", "--out", str(root / "dam")]


def _nls(root):
    return ["nls", "run", "--preset", "nls-desk", "--out", str(root / "nls")]


def _analyze(sub, run, root, name, *extra):
    return ["analyze", sub, "--in", str(root / run), "--out", str(root / f"{name}.csv"), *extra]


def reproduce_figure(tag: str, out="figures"):
    """List of argv lists (without the program name), in dependency order."""
    root = Path(out)
    if tag not in FIGURES:
        raise KeyError(f"unknown figure tag {tag!r}; choose from {', '.join(FIGURES)}")
    if tag == "fig1":
        return [_dam(root), _nls(root),
                _analyze("fronts", "dam", root, "fig1_dam_fronts", "--sigma", "0.4"),
                _analyze("fronts", "nls", root, "fig1_nls_fronts", "--sigma", "0.7")]
    if tag == "fig2":
        return [_dam(root),
                _analyze("rj", "dam", root, "fig2_dam_rj", "--sigma", "0.4"),
                _analyze("fronts", "dam", root, "fig2_dam_fronts", "--sigma", "0.4"),
                _nls(root),
                _analyze("rj", "nls", root, "fig2_nls_rj", "--sigma", "0.7"),
                _analyze("fronts", "nls", root, "fig2_nls_fronts", "--sigma", "0.7")]
    if tag == "fig3":
        return [_dam(root),
                _analyze("rj", "dam", root, "fig3_dam_rj", "--sigma", "0.4"),
                _analyze("fronts", "dam", root, "fig3_dam_fronts", "--sigma", "0.4",
                         "--sigma-tilde", "0.4"),
                _nls(root),
                _analyze("rj", "nls", root, "fig3_nls_rj", "--sigma", "0.7")]
    if tag == "fig4":
        return [_dam(root),
                _analyze("wg", "dam", root, "fig4_wg", "--g=" + G_UV),
                _analyze("collapse", "dam", root, "fig4_collapse", "--g=3.5")]
    if tag == "fig5":
        return [_dam(root),
                _analyze("wg", "dam", root, "fig5_wg", "--g=" + G_IR),
                _analyze("collapse", "dam", root, "fig5_collapse", "--g=-2")]
    if tag == "fig6":
        return [_dam(root),
                _analyze("wg", "dam", root, "fig6_wg", "--g=" + G_BULK),
                _analyze("collapse", "dam", root, "fig6_collapse", "--g=-0.125")]
    if tag == "fig7":
        return [_nls(root), _analyze("wg", "nls", root, "fig7_wg", "--g=" + G_UV)]
    if tag == "fig8":
        return [_nls(root), _analyze("wg", "nls", root, "fig8_wg", "--g=" + G_BULK + ",-0.5")]
    return [["kernel", "scan", "--x-min", "-0.1", "--x-max", "1.5", "--step", "0.05",
             "--out", str(root / "fig9_window.csv")]]
