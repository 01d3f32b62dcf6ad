from django.urls import path
from . import views

app_name = "simulations"

urlpatterns = [
    path("api/runs/", views.RunListAPI.as_view(), name="api_runs"),
    path("api/runs/<int:pk>/", views.RunDetailAPI.as_view(), name="api_run_detail"),
]
