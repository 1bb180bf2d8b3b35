"""Knowledge-grounded selective sampling for contrastive image-report training."""

