# psi = \int K(t-s) (-kappa psi_s + xi) ds with K the power-law kernel has
# psi(t) = xi t^a E_{a,a+1}(-kappa t^a), a = H + 1/2 (Mittag-Leffler series).
import mpmath as mp

mp.mp.dps = 30

def ml(a, b, z):
    return mp.nsum(lambda k: z ** k / mp.gamma(a * k + b), [0, mp.inf])

for H, kappa, xi, t in [(0.1, 1.0, 0.5, 1.0), (0.1, 1.0, 0.5, 0.5), (0.3, 2.0, 1.0, 1.0)]:
    a = mp.mpf(H) + mp.mpf("0.5")
    print(H, kappa, xi, t, xi * mp.mpf(t) ** a * ml(a, a + 1, -kappa * mp.mpf(t) ** a))
