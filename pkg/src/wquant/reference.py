"""Published Laplacian results for N = 10 000 samples, as (mean, spread).

Keyed by ``(bits, scheme, rounding)``.
"""

_METHODS = [
    ("exponential", "mean"), ("exponential", "ceil"), ("exponential", "floor"),
    ("linear", "mean"), ("linear", "ceil"), ("linear", "floor"),
]

_RHO_ROWS = {
    2: "0.9076±0.0006 0.8958±0.0041 0.8578±0.0008 0.9076±0.0006 0.8958±0.0041 0.8578±0.0008",
    3: "0.9665±0.0017 0.9611±0.0018 0.9506±0.0025 0.9326±0.0051 0.9228±0.0033 0.8777±0.0062",
    4: "0.99±0.0005 0.9882±0.0005 0.987±0.0006 0.9715±0.004 0.9557±0.0045 0.94±0.0075",
    5: "0.9971±0.0001 0.9965±0.0001 0.9964±0.0002 0.9908±0.0016 0.9822±0.0027 0.9791±0.0035",
    6: "0.99914±0.00004 0.99898±0.00004 0.99895±0.00004 0.9974±0.0005 0.9943±0.001 0.9938±0.0012",
}

_X0_ROWS = {
    2: "1.1272±0.0076 1.248±0.0382 0.7073±0.007 1.1272±0.0076 1.248±0.0382 0.7073±0.007",
    3: "0.5778±0.0202 0.55±0.0168 0.4029±0.0106 0.9519±0.0421 0.9326±0.0489 0.7406±0.0142",
    4: "0.3394±0.0118 0.2664±0.0077 0.2259±0.0066 0.5775±0.0441 0.5555±0.0425 0.5132±0.0341",
    5: "0.2099±0.0091 0.1491±0.0051 0.1382±0.0055 0.3114±0.0274 0.2979±0.0267 0.2888±0.0251",
    6: "0.1318±0.0078 0.0895±0.005 0.0854±0.0046 0.1603±0.0151 0.1544±0.0144 0.1528±0.0153",
}


def _parse(rows):
    out = {}
    for bits, line in rows.items():
        for (scheme, rounding), cell in zip(_METHODS, line.split()):
            mean, spread = cell.split("±")
            out[(bits, scheme, rounding)] = (float(mean), float(spread))
    return out


MAX_RHO = _parse(_RHO_ROWS)
BEST_X0_SIGMA = _parse(_X0_ROWS)
METHODS = list(_METHODS)
