from django.forms.models import model_to_dict
from django.shortcuts import get_object_or_404
from rest_framework.response import Response
from rest_framework.views import APIView
from .models import ExperimentRun

RUN_FIELDS = ["id", "kind", "config_hash", "seeds", "beta", "omega", "gamma", "eta", "status", "output_path"]
CELL_FIELDS = ["n", "omega", "gamma_policy", "rounds_to_eps", "status"]

def run_summary(run):
    data = model_to_dict(run, fields=RUN_FIELDS)
    data["created_at"] = run.created_at
    return data

class RunListAPI(APIView):
    def get(self, request):
        qs = ExperimentRun.objects.order_by("-created_at")[:200]
        return Response([run_summary(r) for r in qs])

class RunDetailAPI(APIView):
    def get(self, request, pk):
        run = get_object_or_404(ExperimentRun, pk=pk)
        data = run_summary(run)
        data["config"] = run.config
        data["spectral_profile"] = run.spectral_profile
        data["cells"] = [model_to_dict(c, fields=CELL_FIELDS) for c in run.cells.all()]
        return Response(data)
