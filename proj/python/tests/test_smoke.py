import json
import math

import pytest

import sofa


def test_hammersley_calibration():
    area = sofa.hammersley_area(2 / math.pi, 2000, 10000)
    assert abs(area - (math.pi / 2 + 2 / math.pi)) < 1e-3


def test_corner_rotation_is_quarter_disc():
    assert abs(sofa.corner_rotation_area(1000, 5000) - math.pi / 2) < 2e-3


def test_movement_area_matches_fixture():
    n = 400
    r = 2 / math.pi
    t = [i / (n - 1) for i in range(n)]
    alpha = [s * math.pi / 2 for s in t]
    x = [-r * (1 - math.cos(2 * a)) for a in alpha]
    y = [r * math.sin(2 * a) for a in alpha]
    assert abs(sofa.movement_area(t, x, y, alpha, 4000) - (math.pi / 2 + 2 / math.pi)) < 2e-3


def test_pure_translation_is_degenerate():
    t = [0.0, 0.5, 1.0]
    assert sofa.movement_area(t, [0.0, -0.5, -1.0], [0.0] * 3, [0.0] * 3, 100) == 0.0


def test_single_diagonal_corridor():
    res = sofa.g([math.pi / 4], math.pi / 2, math.pi / 2, [(0.0, 0.0)], 20000)
    assert abs(res["value"] - (2 * math.sqrt(2) - 1)) < 1e-3
    assert len(res["gradient"]) == 1


def test_angle_sequences():
    five = sofa.five_angles()
    assert len(five["alphas"]) == 5
    assert abs(math.sin(five["alphas"][0]) - 7 / 25) < 1e-15
    split = sofa.five_angles_split()
    assert split["beta2"] == five["alphas"][4]
    assert len(sofa.gamma_angles(10, 1)["alphas"]) == 8
    with pytest.raises(sofa.SofaError):
        sofa.gamma_angles(2, 1)


def test_cli_roundtrip(tmp_path):
    code, out, _ = sofa.run_cli(
        ["eval-movement", "--fixture", "corner", "--time-points", "200", "--sources", "1000",
         "--out", str(tmp_path), "--run-id", "corner", "--quiet"])
    assert code == 0
    area = json.loads((tmp_path / "corner" / "area.json").read_text())["area"]
    assert abs(area - math.pi / 2) < 1e-2
    assert sofa.run_cli(["--bogus"])[0] == 64


def test_constants():
    assert abs(math.degrees(sofa.theta_star) - 81.2) < 0.05
    assert sofa.gerver_area == pytest.approx(2.219532)
