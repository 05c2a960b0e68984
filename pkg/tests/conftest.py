import pytest

QUICK_CFG = """\
[scenario]
name = quick
duration_s = 0.2
seeds = 1,2

[laser]
h0 = 50
f_low_hz = 10
f_high_hz = 4e4

[cavity]
fsr_hz = 1.5e9
linewidth_hz = 1e4

[servo]
fast_gain_hz_per_v = 18437.75958681034
fast_bw_hz = 3e3
pi1_ki_per_s = 115.84786013315631
sim_rate_hz = 1e5

[analysis]
outputs = psd,field,efficiency,allan,lineshape
bandwidth_hz = 5e3
allan_gate_s = 0.01
actuator_decim = 10
"""


@pytest.fixture
def quick_cfg(tmp_path):
    path = tmp_path / "quick.cfg"
    path.write_text(QUICK_CFG)
    return path
