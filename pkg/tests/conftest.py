import numpy as np
import pytest


def naive_conv2d(x, w, bias=None, stride=(1, 1), padding=(0, 0)):
    """Independent convolution oracle with a different loop nest than
    the library: output pixel outermost, kernel offsets innermost,
    scalar float64 accumulation."""
    W, H, c = x.shape
    n, kw, kh, cw = w.shape
    assert c == cw
    sw, sh = stride
    pw, ph = padding
    ow = (W + 2 * pw - kw) // sw + 1
    oh = (H + 2 * ph - kh) // sh + 1
    out = np.zeros((ow, oh, n), dtype=np.float64)
    for ox in range(ow):
        for oy in range(oh):
            for j in range(n):
                acc = 0.0
                for i in range(c):
                    for dx in range(kw):
                        for dy in range(kh):
                            ix = ox * sw + dx - pw
                            iy = oy * sh + dy - ph
                            if 0 <= ix < W and 0 <= iy < H:
                                acc += float(x[ix, iy, i]) * float(w[j, dx, dy, i])
                out[ox, oy, j] = acc + (float(bias[j]) if bias is not None else 0.0)
    return out.astype(np.float32)


@pytest.fixture
def rng():
    return np.random.default_rng(20240824)
