"""
Bracketing a trellis rate with the two bounds
=============================================

For pure Wiener phase noise the information rate can be computed almost
exactly by a forward recursion over a quantized phase. Here we put the
lower and upper bounds next to it, and next to the coherent AWGN rate.
"""

from pnbounds.bounds import lower_bound, upper_bound
from pnbounds.model import ChannelParams, generate_trace, get_constellation, wiener_spec
from pnbounds.oracle import awgn_mi, trellis_rate

# a 4-QAM trace with Wiener phase noise, 0.1 rad per symbol
const = get_constellation("qam4")
spec = wiener_spec(0.1)
n = 20_000

for snr_db in (3.0, 9.0):
    ch = ChannelParams.from_db(snr_db)
    trace = generate_trace(spec, const, ch, n, seed=1)

    # reference values: the coherent channel and the trellis on the same trace
    coherent = awgn_mi(const, ch)
    trellis = trellis_rate(0.1, const, ch, 512, n, 1, trace=trace)

    # the bounds; a 1024-particle blind filter keeps this quick
    lb = lower_bound(trace, spec, const, ch)
    ub = upper_bound(trace, spec, const, ch, "kalman", np_blind=1024, seed=2)

    print(f"{snr_db:4.1f} dB  LB {lb.value:.3f}+-{lb.stderr:.3f}  trellis {trellis:.3f}  "
          f"UB {ub.value:.3f}+-{ub.stderr:.3f}  coherent {coherent:.3f}")
