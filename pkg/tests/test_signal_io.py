import numpy as np
import numpy.testing as npt
import pytest
from scipy.io import wavfile

from cisnmf.signal_io import (
    ComplexSpectrogram,
    StftConfig,
    Waveform,
    istft,
    read_wav,
    spectrogram_energy,
    stft,
    write_wav,
)


class TestReadWav:
    def test_int16_scaling(self, tmp_path):
        path = tmp_path / "a.wav"
        wavfile.write(path, 44100, np.array([16384, -16384], dtype=np.int16))
        w = read_wav(path)
        npt.assert_allclose(w.samples[0], 0.5, atol=2 ** -15)
        assert w.sample_rate == 44100

    def test_int32_and_float_roundtrip(self, tmp_path):
        path = tmp_path / "b.wav"
        wavfile.write(path, 8000, np.array([2 ** 30], dtype=np.int32))
        npt.assert_allclose(read_wav(path).samples[0], 0.5, atol=2 ** -31)
        path = tmp_path / "c.wav"
        wavfile.write(path, 8000, np.array([0.25, -0.75], dtype=np.float64))
        npt.assert_allclose(read_wav(path).samples, [0.25, -0.75])

    def test_stereo_downmix(self, tmp_path):
        path = tmp_path / "st.wav"
        wavfile.write(path, 8000, np.array([[0.2, 0.6]], dtype=np.float32))
        npt.assert_allclose(read_wav(path).samples, [0.4], atol=1e-7)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "e.wav"
        wavfile.write(path, 8000, np.zeros(0, dtype=np.int16))
        with pytest.raises(ValueError, match="empty waveform"):
            read_wav(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_wav(tmp_path / "nope.wav")


class TestWriteWav:
    def test_lossless_float32_roundtrip(self, tmp_path):
        t = np.arange(800) / 8000
        sine = np.sin(2 * np.pi * 1000 * t).astype(np.float32).astype(np.float64)
        path = tmp_path / "s.wav"
        write_wav(Waveform(sine, 8000), path)
        back = read_wav(path)
        assert np.max(np.abs(back.samples - sine)) == 0.0

    def test_nan_rejected_before_write(self, tmp_path):
        path = tmp_path / "n.wav"
        w = Waveform(np.ones(4), 8000)
        w.samples[1] = np.nan  # bypass constructor validation
        with pytest.raises(ValueError):
            write_wav(w, path)
        assert not path.exists()

    def test_length_preserved(self, tmp_path):
        path = tmp_path / "l.wav"
        write_wav(Waveform(np.array([0.1, 0.2, 0.3]), 8000), path)
        assert read_wav(path).samples.size == 3


class TestStft:
    def test_reference_geometry(self):
        # 10 s at 44.1 kHz, 4096-sample Hann, 75 % overlap.
        x = np.random.default_rng(0).standard_normal(441000)
        s = stft(Waveform(x, 44100), StftConfig(4096, 1024))
        assert s.data.shape[0] == 2049
        assert abs(s.data.shape[1] - 433) <= 2

    def test_zero_waveform(self):
        s = stft(Waveform(np.zeros(2000), 8000), StftConfig(512, 128))
        assert np.all(s.data == 0)

    def test_sinusoid_peaks_at_bin(self):
        k, n = 24, 256
        t = np.arange(4000)
        x = np.sin(2 * np.pi * k / n * t)
        s = stft(Waveform(x, 8000), StftConfig(n, 64))
        mags = np.abs(s.data)
        interior = mags[:, 5:-5]
        npt.assert_array_equal(np.argmax(interior, axis=0),
                               np.full(interior.shape[1], k))

    def test_short_input_padded(self):
        s = stft(Waveform(np.ones(100), 8000), StftConfig(512, 128))
        assert s.n_frames >= 1
        assert s.n_samples == 100


class TestIstft:
    def test_roundtrip_white_noise(self, rng):
        x = rng.standard_normal(20000)
        cfg = StftConfig(512, 128)
        y = istft(stft(Waveform(x, 8000), cfg))
        err = np.linalg.norm(y.samples - x) / np.linalg.norm(x)
        assert err < 1e-10

    def test_zero_spectrogram(self):
        cfg = StftConfig(256, 64)
        s = ComplexSpectrogram(np.zeros((129, 11), complex), cfg, 8000, 500)
        y = istft(s)
        assert y.samples.size == 500
        assert np.all(y.samples == 0)

    def test_single_dc_bin_gives_windowed_constant(self):
        # Closed-form inverse: one DC coefficient of value n in frame t0
        # inverts to a constant-1 frame, windowed and normalized by the
        # accumulated squared window.
        n, hop = 256, 64
        cfg = StftConfig(n, hop)
        n_frames, t0 = 12, 5
        data = np.zeros((cfg.n_bins, n_frames), complex)
        data[0, t0] = n
        n_samples = (n_frames - 1) * hop + n - (n - hop)
        s = ComplexSpectrogram(data, cfg, 8000, n_samples)

        k = np.arange(n)
        w = 0.5 * (1 - np.cos(2 * np.pi * k / n))
        total = np.zeros((n_frames - 1) * hop + n)
        norm = np.zeros_like(total)
        for t in range(n_frames):
            norm[t * hop:t * hop + n] += w * w
        total[t0 * hop:t0 * hop + n] = w  # constant 1.0 frame times window
        expected = (total / np.maximum(norm, 1e-300))[n - hop:n - hop + n_samples]

        npt.assert_allclose(istft(s).samples, expected, atol=1e-12)

    def test_inconsistent_bins_rejected(self):
        cfg = StftConfig(256, 64)
        with pytest.raises(ValueError):
            ComplexSpectrogram(np.zeros((100, 5), complex), cfg, 8000, 500)


class TestInvariants:
    def test_linearity(self, rng):
        cfg = StftConfig(512, 128)
        a = rng.standard_normal(6000)
        b = rng.standard_normal(6000)
        sa = stft(Waveform(a, 8000), cfg).data
        sb = stft(Waveform(b, 8000), cfg).data
        sab = stft(Waveform(2.0 * a - 3.0 * b, 8000), cfg).data
        scale = np.max(np.abs(sab))
        npt.assert_allclose(sab, 2.0 * sa - 3.0 * sb, atol=1e-12 * scale)

    def test_parseval_ratio_constant(self, rng):
        cfg = StftConfig(512, 128)
        ratios = []
        for _ in range(2):
            x = rng.standard_normal(9000)
            s = stft(Waveform(x, 8000), cfg)
            ratios.append(spectrogram_energy(s) / np.sum(x ** 2))
        assert abs(ratios[0] - ratios[1]) / ratios[0] < 1e-8

    def test_roundtrip_many_lengths(self, rng):
        cfg = StftConfig(512, 128)
        for length in (512, 700, 5000, 12345):
            x = rng.standard_normal(length)
            y = istft(stft(Waveform(x, 8000), cfg))
            assert y.samples.size == length
            err = np.linalg.norm(y.samples - x) / np.linalg.norm(x)
            assert err < 1e-10


class TestValidation:
    def test_empty_waveform(self):
        with pytest.raises(ValueError, match="empty"):
            Waveform(np.zeros(0), 8000)

    def test_hop_must_divide(self):
        with pytest.raises(ValueError):
            StftConfig(512, 100)

    def test_hop_exceeding_window_rejected(self):
        with pytest.raises(ValueError):
            StftConfig(128, 256)
