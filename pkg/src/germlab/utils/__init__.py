# germlab Utils Package
