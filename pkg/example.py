from sphere_trace.field_synth import InitialKind, InitialSpec
from sphere_trace.integrators import Equation, SchemeId
from sphere_trace.levy_noise import LevyConfig, LevyKind
from sphere_trace.montecarlo import ExperimentConfig, run_experiment
from sphere_trace.quantities import QuantityId
from sphere_trace.sphere_modes import AngularSpectrum

if __name__ == "__main__":
    config = ExperimentConfig(
        equation=Equation.SCHRODINGER,
        scheme=SchemeId.EXP_EULER,
        quantity=QuantityId.SCHRODINGER_MASS,
        kappa=8,
        T=3.0,
        N=300,
        M=256,
        levy=LevyConfig(
            kind=LevyKind.COMPENSATED_MIX,
            spectrum=AngularSpectrum.power_law(kappa=8),
            master_seed=2024,
        ),
        initial=InitialSpec(kind=InitialKind.PAPER_SCHRODINGER),
        record_every=30,
    )

    series = run_experiment(config, progress=True)
    print(series.to_frame())
