"""Smoke test for the pitchchain_py extension module.

Build and install first, e.g. `maturin develop -m crates/python/Cargo.toml`.
"""

import json
import math

import pitchchain_py as pc


def main():
    motif = [60, 64, 67, 64, 62, 65, 69, 65]
    piece = pc.Piece.from_pitches([p + (12 if (t // 32) % 2 else 0) for t, p in enumerate(motif * 16)], name="motif")
    assert len(piece) == 128

    reparsed = pc.Piece.parse(piece.to_csv())
    assert reparsed.pitches == piece.pitches

    model = pc.Model.train(piece, model="M1", states=4, seed=1, max_iter=50)
    trace = model.log_likelihood_trace
    assert all(b >= a - 1e-8 for a, b in zip(trace, trace[1:]))
    assert math.isclose(model.log_likelihood(piece), trace[-1], rel_tol=1e-9)

    batch = model.generate(20, seed=3)
    assert [p.pitches for p in batch] == [p.pitches for p in model.generate(20, seed=3)]
    assert set(batch[0].pitches) <= set(model.alphabet)

    restored = pc.Model.from_json(model.to_json())
    assert json.loads(restored.to_json()) == json.loads(model.to_json())

    report = pc.evaluate(piece, batch)
    assert report["n_evaluated"] == 20
    assert len(report["ranking.entropy-rmse"]) == 20
    copies = pc.evaluate(piece, [piece] * 3)
    assert copies["entropy_rmse"] == 0.0 and copies["acf_rmse"] == 0.0

    assert math.isclose(pc.entropy([1, 2, 3, 4]), math.log(4))
    assert pc.edit_distance([1, 2, 3], [1, 3]) == 1 / 3
    acf, pacf = pc.acf_pacf([math.sin(t / 3) for t in range(200)], 10)
    assert len(acf) == len(pacf) == 10

    try:
        pc.Model.train(piece, model="M99")
    except ValueError as err:
        assert "M99" in str(err)
    else:
        raise AssertionError("unknown model accepted")

    tvar = pc.Model.train(piece, model="M14")
    assert tvar.log_likelihood(piece) is None
    assert len(tvar.sample(0)) == len(piece)

    print(f"ok: {model}, {len(batch)} pieces, entropy RMSE {report['entropy_rmse']:.4f}")


if __name__ == "__main__":
    main()
