import warnings

import numpy as np
import pytest

from stokesae.engine import ConfigError, FormatError, ShapeError
from stokesae.models import Autoencoder, from_flat, to_flat


def trace(model):
    return [(label, shp_in, shp_out) for _, label, shp_in, shp_out, _ in model.network.shape_trace()]


class TestShapes:
    def test_cae_trace(self):
        rows = trace(Autoencoder.build("CAE", 28))
        outputs = [out for _, _, out in rows]
        convs = [out for label, _, out in rows if label.startswith("Conv_")]
        assert convs == [(112, 64), (56, 32), (28, 16)]
        pools = [out for label, _, out in rows if "pool" in label]
        assert pools == [(56, 64), (28, 32), (14, 16)]
        assert (224,) in outputs
        labels = [label for label, _, _ in rows]
        bottleneck = labels.index("Flatten") + 1
        assert rows[bottleneck] == ("Dense_28", (224,), (28,))
        deconvs = [out for label, _, out in rows if label.startswith("Deconv_")]
        assert deconvs == [(28, 16), (56, 32), (112, 64), (112, 2)]
        assert outputs[-1] == (112, 2) and labels[-1] == "ELU"

    def test_dae_widths(self):
        rows = trace(Autoencoder.build("DAE", 28))
        widths = [out[0] for label, _, out in rows if label.startswith("Dense_")]
        assert widths == [448, 224, 112, 28, 112, 224, 448, 224]

    @pytest.mark.parametrize("kind", ["DAE", "CAE"])
    @pytest.mark.parametrize("b", [7, 14, 28, 56, 112])
    def test_bottleneck_sweep(self, kind, b):
        model = Autoencoder.build(kind, b)
        z = model.encode(np.full((3, 112, 2), 0.5, dtype=np.float32))
        assert z.shape == (3, b)
        assert model.decode(z).shape == (3, 112, 2)

    def test_cae_parameter_count(self):
        # conv/deconv: K*Cin*Cout + Cout, BN: 4*C, dense: in*out + out
        def conv(cin, cout):
            return 7 * cin * cout + cout
        expected = (conv(2, 64) + conv(64, 32) + conv(32, 16) + 4 * (64 + 32 + 16)
                    + (224 * 28 + 28) + (28 * 224 + 224)
                    + conv(16, 16) + conv(16, 32) + conv(32, 64) + 4 * (16 + 32 + 64) + conv(64, 2))
        assert Autoencoder.build("CAE", 28).param_count == expected

    def test_dae_parameter_count(self):
        widths = [224, 448, 224, 112, 28, 112, 224, 448, 224]
        dense = sum(a * b + b for a, b in zip(widths[:-1], widths[1:]))
        bn = 4 * (448 + 224 + 112 + 112 + 224 + 448)
        assert Autoencoder.build("DAE", 28).param_count == dense + bn


class TestLayout:
    def test_flatten_puts_i_block_first(self):
        p = np.zeros((1, 112, 2))
        p[0, :, 0] = np.arange(112)
        p[0, :, 1] = 1000 + np.arange(112)
        flat = to_flat(p)
        np.testing.assert_array_equal(flat[0, :112], np.arange(112))
        np.testing.assert_array_equal(flat[0, 112:], 1000 + np.arange(112))
        np.testing.assert_array_equal(from_flat(flat), p)

    def test_wrong_profile_shape(self):
        with pytest.raises(ShapeError):
            Autoencoder.build("CAE").encode(np.zeros((2, 224)))

    def test_wrong_latent_width(self):
        with pytest.raises(ShapeError):
            Autoencoder.build("DAE", 28).decode(np.zeros((2, 14)))

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            Autoencoder.build("VAE")

    @pytest.mark.parametrize("b", [0, 225, 2.5])
    def test_bad_bottleneck(self, b):
        with pytest.raises(ConfigError):
            Autoencoder.build("CAE", b)

    def test_unscaled_input_warns(self):
        with pytest.warns(UserWarning, match="scaled"):
            Autoencoder.build("DAE", 7).encode(np.full((2, 112, 2), 9000.0, dtype=np.float32))

    def test_scaled_input_silent(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            Autoencoder.build("DAE", 7).encode(np.full((2, 112, 2), 0.5, dtype=np.float32))


class TestDeterminism:
    @pytest.mark.parametrize("kind", ["DAE", "CAE"])
    def test_same_seed_same_weights(self, kind):
        a = Autoencoder.build(kind, 14, seed=5).network.state_dict()
        b = Autoencoder.build(kind, 14, seed=5).network.state_dict()
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])

    def test_different_seed(self):
        a = Autoencoder.build("CAE", 14, seed=5).network.state_dict()
        b = Autoencoder.build("CAE", 14, seed=6).network.state_dict()
        assert any(not np.array_equal(a[n], b[n]) for n in a)

    def test_encode_decode_equals_full_pass(self, rng):
        model = Autoencoder.build("CAE", 28, seed=1)
        x = rng.uniform(0, 1, (5, 112, 2)).astype(np.float32)
        np.testing.assert_allclose(model.reconstruct(x), model.network.predict(x), rtol=1e-6, atol=1e-6)


class TestPersistence:
    @pytest.mark.parametrize("kind", ["DAE", "CAE"])
    def test_round_trip(self, kind, tmp_path, rng):
        model = Autoencoder.build(kind, 28, seed=2)
        # make the moving statistics non-trivial
        model.network.forward(model.to_input(rng.uniform(0, 1, (8, 112, 2))), training=True)
        path = tmp_path / "w.saew"
        model.save(path, note="x")
        loaded, meta = Autoencoder.load(path)
        assert meta["note"] == "x" and loaded.kind == kind and loaded.bottleneck == 28
        for name, value in model.network.state_dict().items():
            np.testing.assert_array_equal(loaded.network.state_dict()[name], value)
        x = rng.uniform(0, 1, (3, 112, 2)).astype(np.float32)
        np.testing.assert_array_equal(loaded.reconstruct(x), model.reconstruct(x))

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "w.saew"
        Autoencoder.build("DAE", 7).save(path)
        data = path.read_bytes()
        path.write_bytes(data[:-10])
        with pytest.raises(FormatError):
            Autoencoder.load(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "w.saew"
        path.write_bytes(b"NOPE" + bytes(20))
        with pytest.raises(FormatError):
            Autoencoder.load(path)
