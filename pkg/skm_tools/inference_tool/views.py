from django.http import JsonResponse
import numpy as np

from .budget import BudgetLedger, substream
from .exceptions import InferenceError
from .harness import BUILTINS
from .model_core import simulate_direct
from .models import InferenceRun
from .persistence import to_jsonable

MAX_EVENTS = 10 ** 5


def get_models(request):
    data = []
    for key, factory in BUILTINS.items():
        model = factory()
        data.append(
            dict(
                key=f"builtin:{key}",
                species=list(model.network.species_names),
                reactions=model.network.to_dict()["reactions"],
                theta=model.theta.tolist(),
                x0=model.x0.tolist(),
                regimes=model.regimes,
            )
        )
    return JsonResponse(data, safe=False)


def get_simulation(request):
    if request.method == "GET":
        params = request.GET
        key = params.get("model", "lv").replace("builtin:", "")
        if key not in BUILTINS:
            return JsonResponse({"error": f"Unknown model {key!r}"}, status=400)
        model = BUILTINS[key]()
        try:
            t_end = float(params.get("tEnd", 10))
            n_points = to_int(params.get("points", 101))
            seed = to_int(params.get("seed", 0))
            with_events = to_bool(params.get("events", "false"))
            theta = (
                np.array(list(map(float, params.getlist("theta[]"))))
                if "theta[]" in params
                else model.theta
            )
            times = np.linspace(0.0, t_end, n_points)
            trajectory = simulate_direct(
                model.network,
                theta,
                model.x0,
                t_end,
                substream(seed),
                BudgetLedger(1),
                record_events=with_events,
                obs_times=times,
            )
        except (InferenceError, TypeError, ValueError) as exc:
            return JsonResponse({"error": str(exc)}, status=400)

        data = dict(
            species=list(model.network.species_names),
            times=times.tolist(),
            states=trajectory.obs_states.tolist(),
            n_events=trajectory.n_events,
        )
        if with_events:
            if trajectory.n_events > MAX_EVENTS:
                return JsonResponse(
                    {"error": f"{trajectory.n_events} events exceed the limit of {MAX_EVENTS}"},
                    status=400,
                )
            data["event_times"] = trajectory.event_times.tolist()
            data["event_reactions"] = trajectory.event_reactions.tolist()
        return JsonResponse(data)


def get_runs(request):
    data = list(
        InferenceRun.objects.values(
            "id", "command", "model", "regime", "seed", "budget", "status", "created"
        )
    )
    return JsonResponse(data, safe=False)


def get_run(request, run_id):
    try:
        run = InferenceRun.objects.get(pk=run_id)
    except InferenceRun.DoesNotExist:
        return JsonResponse({"error": f"No run with id {run_id}"}, status=404)
    return JsonResponse(
        dict(
            id=run.id,
            command=run.command,
            model=run.model,
            regime=run.regime,
            seed=run.seed,
            budget=run.budget,
            consumed=run.consumed,
            status=run.status,
            message=run.message,
            output_dir=run.output_dir,
            summary=to_jsonable(run.summary()),
        )
    )


def to_bool(bool_str):
    if bool_str == "true":
        return True
    elif bool_str == "false":
        return False
    else:
        raise TypeError("Only 'true' or 'false' are allowed!")


def to_int(int_str):
    try:
        return int(int_str)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"Expected an integer, got {int_str!r}") from exc
