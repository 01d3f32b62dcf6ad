from django.contrib import admin
from django.db import models
from .models import ExperimentRun, SweepCell

class SweepCellInline(admin.TabularInline):
    model = SweepCell
    extra = 0
    readonly_fields = ("n", "omega", "gamma_policy", "rounds_to_eps", "status")
    can_delete = False

@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = ("id", "kind", "status", "omega", "gamma", "eta", "created_at", "cell_count")
    search_fields = ("config_hash", "output_path")
    list_filter = ("kind", "status")
    date_hierarchy = "created_at"
    list_per_page = 50
    readonly_fields = ("created_at", "config_hash", "profile_display")
    inlines = [SweepCellInline]

    fieldsets = (
        ("Run", {
            "fields": ("kind", "status", "output_path", "seeds")
        }),
        ("Stepsizes", {
            "fields": ("beta", "omega", "gamma", "eta", "profile_display"),
        }),
        ("Configuration", {
            "fields": ("config_hash", "config", "spectral_profile"),
            "classes": ("collapse",)
        }),
        ("System", {
            "fields": ("created_at",),
            "classes": ("collapse",)
        }),
    )

    def get_queryset(self, request):
        queryset = super().get_queryset(request)
        return queryset.annotate(_cell_count=models.Count("cells"))

    @admin.display(description="Cells", ordering="_cell_count")
    def cell_count(self, obj):
        return obj._cell_count

    @admin.display(description="Spectral profile")
    def profile_display(self, obj):
        profile = obj.spectral_profile
        if not profile:
            return "Not computed"
        return f"delta={profile['delta']:.4g}, C={profile['bigC']:.4g}, kappa={profile['kappa']:.4g}"

@admin.register(SweepCell)
class SweepCellAdmin(admin.ModelAdmin):
    list_display = ("id", "run", "n", "omega", "gamma_policy", "rounds_to_eps", "status")
    list_filter = ("status", "gamma_policy", "n")
    list_per_page = 50
