"""Vehicle simulator walkthrough: track, laps, tracking metrics.

Simulates measurement episodes for a gentle and an aggressive controller,
prints the objective and both safety margins, and exports one trace as CSV.
The aggressive controller violates the yaw-rate constraint after the 1 m
disturbance at T1 exactly the way unsafe gains would on the real vehicle.

Run: python demos/03_vehicle_lap.py
"""

import numpy as np

from safebo import (
    ControllerParams,
    default_track,
    evaluate_constraints,
    evaluate_objective,
    simulate_lap,
)


def main():
    track = default_track()
    s_ref, t_ref = track.reference_time_grid()
    print(f"track: {track.total_length:.0f} m, lap time {t_ref[-1]:.1f} s, "
          f"episode [0, {track.config.t2:.0f}] s, disturbance at t={track.config.t1:.0f} s")

    for label, params in [
        ("gentle  (initial)", ControllerParams(k_ct=0.0055, k_ca=0.134, k_d=0.0)),
        ("tight   (good)   ", ControllerParams(k_ct=0.0130, k_ca=0.450, k_d=0.0)),
        ("aggressive (unsafe)", ControllerParams(k_ct=0.0240, k_ca=0.450, k_d=0.0)),
    ]:
        trace = simulate_lap(params, track)
        f = evaluate_objective(trace)
        g1, g2 = evaluate_constraints(trace)
        pre = np.abs(trace.column("e_ct")[:10000])
        post = np.abs(trace.column("yaw_rate")[10000:])
        flag = "  <-- yaw-rate violation" if g2 < 0 else ""
        print(f"{label}: f={f:.3f}  g1={g1:+.3f}  g2={g2:+.3f}  "
              f"max|e_ct|={pre.max():.2f} m  max|yaw|={post.max():.3f} rad/s{flag}")

    trace = simulate_lap(ControllerParams(0.0055, 0.134, 0.0), track)
    trace.to_csv("demo_trace.csv")
    print("\nwrote demo_trace.csv (columns: t,x,y,psi,v,delta,e_ct,e_ca,yaw_rate)")


if __name__ == "__main__":
    main()
