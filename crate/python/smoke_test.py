"""Exercise the snspd extension end to end.

Build first:  pip install --no-build-isolation -e crates/python
"""

import math
import os
import sys
import tempfile

import snspd


def close(a, b, tol):
    return abs(a - b) <= tol * max(abs(b), 1e-300)


def main():
    p = snspd.default_wire_params()
    assert close(snspd.ide(p["i_detect"], p), 0.5, 1e-12)
    assert close(snspd.tau_reset(p), p["l_kinetic"] / p["r_load"], 1e-12)
    print(f"tau_reset {snspd.tau_reset():.3f} ns, dead_time {snspd.dead_time():.3f} ns")

    shares = snspd.coupling_profile(mode={"offset": 0.0})
    assert len(shares) == 32 and sum(shares) < 1.0
    print(f"coupled fraction {sum(shares):.4f}")

    wire_mcr = snspd.mcr_3db()
    array_mcr = snspd.mcr_3db(shares=[0.78 * s / sum(shares) for s in shares])
    assert array_mcr > 10 * wire_mcr
    print(f"3 dB MCR: wire {wire_mcr / 1e6:.1f} Mcps, array {array_mcr / 1e9:.3f} Gcps")

    try:
        snspd.ide(5.0, {"i_detec": 5.0})
    except KeyError:
        pass
    else:
        raise AssertionError("misspelled key accepted")

    cfg = {
        "geometry": {"n_wires": 1},
        "optical_efficiency": 1.0,
        "mode": {"mode_field_diameter": 0.2, "offset": 0.0},
        "source": {"kind": "pulsed", "rep_rate": 2e7, "pulse_sigma": 0.2, "mean_photons_per_pulse": 0.05},
        "device": {"shared": {"dcr_background": 0.0}},
        "duration_ns": 2e7,
        "seed": 3,
    }
    out = snspd.simulate(cfg)
    tags, truth = out["tags"], out["truth"]
    n = len(tags["time_ps"])
    assert n > 1000 and n == len(truth["photon_time_ps"])
    assert all(a <= b for a, b in zip(tags["time_ps"], tags["time_ps"][1:]))
    again = snspd.simulate(cfg)
    assert again["tags"] == tags, "same seed must reproduce"

    res = snspd.timing_residuals(tags, photon_times=truth["photon_time_ps"])
    fwhm, fw1m = snspd.jitter_widths(res)
    assert 10.0 < fwhm < 40.0 and fw1m > fwhm
    print(f"{n} tags, jitter FWHM {fwhm:.1f} ps, FW1%M {fw1m:.1f} ps")

    cal = snspd.calibrate_walk(tags, 1, photon_times=truth["photon_time_ps"])
    fixed = snspd.apply_walk(tags, cal)
    assert len(fixed["time_ps"]) == n

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "tags.pqtg")
        snspd.write_tags(path, tags)
        assert os.path.getsize(path) == 16 + 16 * n
        assert snspd.read_tags(path) == tags
        empty = os.path.join(d, "empty.pqtg")
        snspd.write_tags(empty, {"channel": [], "time_ps": []})
        assert os.path.getsize(empty) == 16

    assert not math.isnan(snspd.misalignment_penalty())
    print("smoke test passed")


if __name__ == "__main__":
    sys.exit(main())
