# Accretia: certified convergence rates for accretive operators
