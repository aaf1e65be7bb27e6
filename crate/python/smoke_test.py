"""Quick end-to-end check of the cvqkd_lab extension module."""

import math

import cvqkd_lab as q


def close(a, b, rel=1e-9):
    return math.isclose(a, b, rel_tol=rel, abs_tol=1e-15)


def main():
    params = q.ProtocolParams(40.0)
    assert close(q.db_to_transmission(10.0), 0.1)
    assert close(q.transmission_to_db(0.5), 10 * math.log10(2))
    assert q.g_entropy(0.0) == 0.0

    ch = q.ChannelModel.from_loss_db(3.0, 0.02)
    det = q.DetectorModel(0.606, 0.041)
    hom = q.key_rate("perfect_homodyne", params, ch)
    het = q.key_rate("heterodyne", params, ch)
    noisy = q.key_rate("noisy_homodyne", params, ch, det)
    assert hom.k_raw > 0 and het.k_raw > 0 and noisy.k_raw > 0
    assert close(hom.k_raw, hom.i_ab - hom.chi_be)
    print("K hom/het/noisy at 3 dB:", hom.k_raw, het.k_raw, noisy.k_raw)

    # Trusted noise already pays off at zero loss with eps = 0.25.
    ch0 = q.ChannelModel.from_loss_db(0.0, 0.25)
    chi_d, k_opt, k_zero = q.optimal_added_noise(params, ch0)
    assert k_opt >= k_zero
    assert close(k_opt, 0.353215876533142, 1e-9), k_opt
    print("optimal chi_D at 0 dB:", chi_d, "K:", k_opt)

    f = q.tolerable_excess_noise("noisy_homodyne", params, 5.0, optimize_chi_d=True)
    g = q.tolerable_excess_noise("perfect_homodyne", params, 5.0)
    assert f.converged and g.converged and f.eps_max >= g.eps_max
    print("frontier at 5 dB:", f.eps_max, ">=", g.eps_max)

    plan = q.gain_for_electronic_noise(det, 0.0041)
    assert close(plan["gain"], 10.0)

    k_bel, k_true, gap = q.attack_rate_gap(params, q.ChannelModel.from_loss_db(3.0, 0.2), 0.041, 0.606, 2.0)
    assert gap > 0 and close(gap, k_bel - k_true)
    print("attack gap at G=2:", gap)

    batch = q.simulate_batch(params, q.ChannelModel.from_transmission(0.5, 0.2), det, 100_000, 3)
    assert len(batch) == 100_000
    bob = batch.normalize(det, "calibrated")
    rep = q.estimate(batch.matched_alice(), bob, det, true_transmission=0.5)
    z = (rep["eps_hat"] - 0.2) / rep["standard_errors"]["eps_hat"]
    assert abs(z) < 5, rep
    print("MC eps_hat:", rep["eps_hat"], "z:", z)

    try:
        q.ProtocolParams(0.5)
    except ValueError:
        pass
    else:
        raise AssertionError("V < 1 accepted")

    print("smoke test ok")


if __name__ == "__main__":
    main()
