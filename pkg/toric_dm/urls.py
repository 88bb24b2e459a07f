"""
URL configuration for the toric_dm project.

Only the admin is served; it browses the run, stage, artifact and ensemble
records written by the experiment pipeline.
"""
from django.contrib import admin
from django.urls import path

urlpatterns = [
    path('admin/', admin.site.urls),
]
