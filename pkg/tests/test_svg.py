import xml.etree.ElementTree as ET

import numpy as np

from sdeapc import DomainGrid
from sdeapc.svg import RAMP, heatmap, interval_plot, ramp_index

NS = "{http://www.w3.org/2000/svg}"


def test_heatmap_one_rect_per_cell():
    g = DomainGrid()
    root = ET.fromstring(heatmap(np.linspace(0, 1, g.n_cells), g, "t", "p"))
    assert len(root.findall(f"{NS}rect")) == 640
    assert len(root.findall(f"{NS}polygon")) == len(RAMP)


def test_heatmap_missing_and_flat_values():
    g = DomainGrid(25, 27, 2001, 2002)
    v = np.full(g.n_cells, 0.3)
    v[0] = np.nan
    root = ET.fromstring(heatmap(v, g))
    fills = [r.get("fill") for r in root.findall(f"{NS}rect")]
    assert fills.count("#d9d9d9") == 1 and len(set(fills)) == 2


def test_ramp_index_ends():
    assert ramp_index([0.0, 1.0], 0.0, 1.0).tolist() == [0, len(RAMP) - 1]


def test_heatmap_escapes_text():
    g = DomainGrid(25, 26, 2001, 2002)
    ET.fromstring(heatmap(np.zeros(4), g, "a < b & c", "x"))


def test_interval_plot_parses():
    x = np.arange(2001, 2011)
    s = {"age 30": (np.sin(x), np.sin(x) - 1, np.sin(x) + 1),
         "empty": (np.full(10, np.nan),) * 3}
    root = ET.fromstring(interval_plot(x, s, "t", marker_x=2005))
    assert len(root.findall(f"{NS}polyline")) == 1


def test_deterministic_text():
    g = DomainGrid(25, 30, 2001, 2004)
    v = np.random.default_rng(0).normal(size=g.n_cells)
    assert heatmap(v, g, "x") == heatmap(v.copy(), g, "x")
