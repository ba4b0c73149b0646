"""Smoke tests for the _pulsebp extension: each main operation is exercised
once with a cheap sanity assertion."""

import math

import numpy as np

import _pulsebp as pp


def test_dsp():
    fs = 125.0
    t = np.arange(0, 20, 1 / fs)
    x = np.sin(2 * np.pi * 1.2 * t)

    hr = pp.estimate_heart_rate(x, fs)
    assert abs(hr - 72.0) < 0.5, hr

    flat = pp.bandpass(np.full(2500, 5.0), fs)
    assert np.max(np.abs(flat)) < 1e-3

    z = pp.zscore(x)
    assert abs(z.mean()) < 1e-9 and abs(z.std() - 1.0) < 1e-9

    y, new_fs = pp.resample_to_length(x[:875], fs, 250)
    assert len(y) == 250 and new_fs < fs

    snr = pp.snr_db(x[:1250], fs, 72.0)
    assert snr > 20.0, snr

    d1 = pp.derivative(np.arange(100.0), fs, 1)
    assert abs(d1[50] - fs) < 1e-9


def test_pos():
    fps = 30.0
    t = np.arange(0, 40, 1 / fps)
    pulse = np.sin(2 * np.pi * 1.2 * t)
    r = np.full_like(t, 160.0)
    g = 120.0 * (1.0 - 0.02 * pulse)
    b = np.full_like(t, 95.0)
    h = pp.pos_extract(r, g, b, fps)
    assert len(h) == len(t)
    assert abs(pp.estimate_heart_rate(h, fps) - 72.0) < 3.0


def test_pipeline_and_models():
    cohort = pp.synth_cohort(
        {
            "n_subjects": 6,
            "duration_s": 120.0,
            "noise_std": 0.05,
            "bp_within_subject_std": 2.0,
            "bp_between_subject_std": 10.0,
            "seed": 3,
        }
    )
    assert len(cohort) == 6
    ws = pp.build_window_set(
        [{"subject_id": r["subject_id"], "fs": r["fs"], "ppg": r["ppg"], "abp": r["abp"]} for r in cohort]
    )
    n = ws["windows"].shape[0]
    assert n > 40, ws["rejection_log"]
    assert ws["windows"].shape[1:] == (1, 875)
    assert np.all(ws["sbp"] > ws["dbp"])

    subjects = np.array(ws["subject_id"])
    train_mask = np.isin(subjects, ["S0000", "S0001", "S0002", "S0003"])
    val_mask = subjects == "S0004"

    def subset(mask):
        return {
            "windows": ws["windows"][mask],
            "subject_id": [s for s, m in zip(ws["subject_id"], mask) if m],
            "sbp": ws["sbp"][mask],
            "dbp": ws["dbp"][mask],
            "source_offset_s": ws["source_offset_s"][mask],
        }

    result = pp.train_model(subset(train_mask), subset(val_mask), {"kind": "linear"}, {"epochs": 5, "seed": 1})
    assert result["best_val_mae"] < 50.0
    preds = pp.predict(result["checkpoint"], subset(val_mask))
    assert preds.shape == (int(val_mask.sum()), 2)
    assert np.all(np.isfinite(preds))

    err = pp.gradient_check("cnn1d", 0)
    assert err < 1e-4, err


def test_rppg_pipeline():
    cohort = pp.synth_cohort(
        {
            "n_subjects": 1,
            "duration_s": 180.0,
            "noise_std": 0.0,
            "bp_between_subject_std": 0.0,
            "hr_min": 72.0,
            "hr_max": 72.0,
            "seed": 11,
        }
    )
    rgb = cohort[0]["rgb"]
    rgb["subject_id"] = cohort[0]["subject_id"]
    ws = pp.rppg_window_pipeline(rgb)
    assert ws["windows"].shape[0] > 20, ws["rejection_log"]
    assert ws["windows"].shape[2] == 875
    assert np.all(ws["snr"] >= -7.0)


def test_statistics():
    t, df, p = pp.paired_t_test(
        np.array([1.1, 2.3, 0.9, 1.8, 2.2]), np.array([1.0, 2.0, 1.0, 1.5, 2.0])
    )
    assert df == 4
    assert abs(t - 2.138089935299) < 1e-6
    assert abs(p - 0.099300683214) < 1e-6

    ok, frac = pp.bhs_aami_check(
        np.concatenate([np.full(17, 110.0), np.full(3, 111.0)]), np.full(20, 100.0)
    )
    assert ok and math.isclose(frac, 0.85)


if __name__ == "__main__":
    test_dsp()
    test_pos()
    test_pipeline_and_models()
    test_rppg_pipeline()
    test_statistics()
    print("smoke tests passed")
